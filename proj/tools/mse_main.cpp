#include "mse/cli.hpp"

int main(int argc, char** argv) { return mse::run(argc, argv); }
