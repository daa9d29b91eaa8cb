#pragma once

// Runs the axir binary through the shell and returns its exit code.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

namespace fixture {

inline int run_cli(const std::string& args, const std::filesystem::path& log = "/dev/null") {
  const std::string cmd =
      std::string(AXIR_CLI) + " " + args + " >" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (status == -1 || !WIFEXITED(status)) return -1;
  return WEXITSTATUS(status);
}

}  // namespace fixture
