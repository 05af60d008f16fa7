#include "toolbudget/cli.hpp"

int main(int argc, char** argv) {
    return toolbudget::cli_dispatch(std::vector<std::string>(argv + 1, argv + argc));
}
