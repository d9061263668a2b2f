#include "ctxpose/cli.hpp"

int main(int argc, char** argv) { return ctxpose::run_cli(argc, argv); }
