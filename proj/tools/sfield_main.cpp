#include "sf/cli.hpp"

int main(int argc, char** argv) {
    return sf::cli_run(std::vector<std::string>(argv + 1, argv + argc));
}
