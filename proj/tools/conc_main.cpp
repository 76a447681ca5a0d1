#include <iostream>

int main() {
    std::cerr << "conc: scenario runner not wired up yet\n";
    return 1;
}
