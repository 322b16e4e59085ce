#include "cist/cli.hpp"

int main(int argc, char** argv) { return cist::run_cli(argc, argv); }
