#include "ssrec/cli.hpp"

int main(int argc, char** argv) { return ssrec::cli::run(argc, argv); }
