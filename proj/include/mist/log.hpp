#ifndef MIST_LOG_HPP
#define MIST_LOG_HPP

#include <string>
#include <vector>

namespace mist::log {

// Structured log lines go to stderr as "[LEVEL] [stage] [patient] message".
// Warnings are additionally collected so a run manifest can embed them.

void info(const std::string& stage, const std::string& patient,
          const std::string& message);
void warn(const std::string& stage, const std::string& patient,
          const std::string& message);
void error(const std::string& stage, const std::string& patient,
           const std::string& message);

// Drains and returns the warnings recorded since the last call.
std::vector<std::string> take_warnings();

void set_quiet(bool quiet);

}  // namespace mist::log

#endif
