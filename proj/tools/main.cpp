// CLI entry point; filled in alongside the job runner.
int main() { return 0; }
