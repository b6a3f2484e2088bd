#include "evade/cli.hpp"

int main(int argc, char** argv) { return evade::dispatch(argc, argv); }
