// Stand-alone stub generation server for exercising the `extend`
// subcommand without a real language-model backend. Prints its endpoint
// and serves /generate until interrupted.

#include <iostream>

#include "stm/stub_server.hpp"

int main() {
  stm::StubGenerationServer server;
  const std::string endpoint = server.start();
  std::cout << endpoint << std::endl;
  server.wait();
  return 0;
}
