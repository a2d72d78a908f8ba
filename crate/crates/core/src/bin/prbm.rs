use std::process::ExitCode;

fn main() -> ExitCode {
    match prbm::cli::run(std::env::args_os()) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", prbm::cli::error_line(&e));
            ExitCode::FAILURE
        }
    }
}
