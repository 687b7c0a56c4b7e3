#include <bpcfg/cli.hpp>

int main(int argc, char** argv) { return bpcfg::cli::run(argc, argv); }
