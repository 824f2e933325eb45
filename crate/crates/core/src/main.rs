// Training frees and reallocates the same large tape buffers every epoch;
// mimalloc hands them back without returning pages to the OS in between.
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

fn main() {
    std::process::exit(hoin::cli::cli_main(std::env::args_os()));
}
