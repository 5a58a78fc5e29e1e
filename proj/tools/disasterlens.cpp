#include "disasterlens/cli.hpp"

int main(int argc, char** argv) { return disasterlens::cli::run(argc, argv); }
