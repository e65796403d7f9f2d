#include "qparity/app.hpp"

int main(int argc, char** argv) { return qparity::run_cli(argc, argv); }
