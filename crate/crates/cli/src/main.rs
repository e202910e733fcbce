fn main() {
    if let Err(e) = wkcal_cli::run_cli(std::env::args_os()) {
        // clap help/version arrive as errors with their own formatting
        if let Some(clap_err) = e.downcast_ref::<clap::Error>() {
            clap_err.exit();
        }
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
