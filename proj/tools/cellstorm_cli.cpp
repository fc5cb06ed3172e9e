#include "cellstorm/cli.hpp"

int main(int argc, char** argv) { return cellstorm::cli::run(argc, argv); }
