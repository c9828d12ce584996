#include "dpcert/cli.hpp"

int main(int argc, char** argv) { return dpcert::cli::run(argc, argv); }
