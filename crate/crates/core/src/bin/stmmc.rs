// Training allocates and frees large matrices every epoch; glibc malloc
// keeps returning that memory to the OS and faulting it back in.
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    std::process::exit(stmmc::cli::main_with_args(std::env::args_os()));
}
