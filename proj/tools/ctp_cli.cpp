#include <cstdio>

int main() {
    std::puts("ctp: placeholder");
    return 0;
}
