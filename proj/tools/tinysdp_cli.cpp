#include <tinysdp/lifting.hpp>

#include <cstdio>

int main()
{
  std::puts("tinysdp: command-line driver not wired up yet");
  return 2;
}
