#include "gradreg/cli.hpp"

int main(int argc, char** argv) { return gradreg::run_cli(argc, argv); }
