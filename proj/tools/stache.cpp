#include "stache/commands.hpp"

int main(int argc, char** argv) { return stache::run_cli(argc, argv); }
