#include "dyadgrow/cli.hpp"

int main(int argc, char** argv) { return dyadgrow::cli::run(argc, argv); }
