use std::io::{self, Write};

fn main() {
    let stdout = io::stdout();
    let stderr = io::stderr();
    let mut out = io::BufWriter::new(stdout.lock());
    let code = lever_sketch::commands::main_with_args(std::env::args_os(), &mut out, &mut stderr.lock());
    let _ = out.flush();
    drop(out);
    std::process::exit(code);
}
