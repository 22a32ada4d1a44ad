// Batch pipeline for moral-dilemma decision measurement:
// generate -> run -> analyze -> align -> report. Subcommands compose through
// files only; every result file is tied to a manifest.

#include <cstdio>

int main(int argc, char** argv) {
  (void)argc;
  (void)argv;
  std::puts("placeholder");
  return 1;
}
