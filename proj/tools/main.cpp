#include "cnncap/cli.hpp"

int main(int argc, char** argv)
{
    return cnncap::cli::run(argc, argv);
}
