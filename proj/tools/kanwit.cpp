#include "kanwit/commands.hpp"

int main(int argc, char** argv) { return kanwit::cli::run_cli(argc, argv); }
