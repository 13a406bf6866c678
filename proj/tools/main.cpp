#include <cstdio>

int main() {
    std::puts("crossfont: subcommands not wired up yet");
    return 2;
}
