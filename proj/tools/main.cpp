#include "sspe/cli.hpp"

int main(int argc, char** argv) { return sspe::cli::run(argc, argv); }
