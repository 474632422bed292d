#include "dkg/cli.hpp"

int main(int argc, char** argv) { return dkg::cli_main(argc, argv); }
