#include <csignal>
#include <iostream>
#include <string>
#include <vector>

#include "portwin/cli/app.hpp"

namespace {

void on_signal(int) { portwin::cli::interrupt_flag().store(true); }

}  // namespace

int main(int argc, char** argv) {
  struct sigaction sa {};
  sa.sa_handler = on_signal;
  sigemptyset(&sa.sa_mask);
  sigaction(SIGINT, &sa, nullptr);
  sigaction(SIGTERM, &sa, nullptr);
  std::signal(SIGPIPE, SIG_IGN);
  const std::vector<std::string> args(argv + 1, argv + argc);
  return portwin::cli::dispatch(args, std::cout, std::cerr);
}
