// Copyright the talr authors. Licensed under the Apache License, Version 2.0;
// see LICENSE in the project root.
#include "talr/cli.hpp"

int main(int argc, char** argv) { return talr::talr_main(argc, argv); }
