#include <string>
#include <vector>

#include "debiasrag/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return debiasrag::cli::dispatch(args);
}
