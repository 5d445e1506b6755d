#include "cli.hpp"

int main(int argc, char** argv) { return ucsbi::cli::run(argc, argv); }
