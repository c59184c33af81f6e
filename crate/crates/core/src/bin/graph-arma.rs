use graph_arma::alloc_track::CountingAlloc;

#[global_allocator]
static ALLOC: CountingAlloc = CountingAlloc;

fn main() {
    std::process::exit(graph_arma::cli::run(std::env::args_os()));
}
