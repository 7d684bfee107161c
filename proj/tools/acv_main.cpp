#include <string>
#include <vector>

#include "acv/cli.hpp"

int main(int argc, char** argv) {
    return acv::run_command(std::vector<std::string>(argv + 1, argv + argc));
}
