#include "convrec/app/cli.hpp"

int main(int argc, char** argv) { return convrec::app::run_cli(argc, argv); }
