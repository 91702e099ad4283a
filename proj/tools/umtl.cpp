// Placeholder entry point; subcommands land with the pipeline modules.
#include <cstdio>

int main() {
    std::puts("umtl: no subcommand");
    return 2;
}
