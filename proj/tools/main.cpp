#include "seqci/cli.hpp"

int main(int argc, char** argv) { return seqci::cli_main(argc, argv); }
