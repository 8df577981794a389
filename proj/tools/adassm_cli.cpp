#include "adassm/cli.hpp"

int main(int argc, char** argv) { return adassm::run_cli(argc, argv); }
