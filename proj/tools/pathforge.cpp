#include "pathforge/app.hpp"

int main(int argc, char** argv) { return pathforge::cli::dispatch(argc, argv); }
