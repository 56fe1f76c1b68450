#include "bgnn/cli.hpp"

int main(int argc, char** argv) { return bgnn::cli::run(argc, argv); }
