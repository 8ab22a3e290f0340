// Placeholder entry point; the CLI is assembled in src/cli.cpp once the
// pipeline modules land.
int main() { return 0; }
