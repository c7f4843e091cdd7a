#include "mist/log.hpp"

#include <cstdio>
#include <mutex>

namespace mist::log {

namespace {

std::mutex g_mutex;
std::vector<std::string> g_warnings;
bool g_quiet = false;

void emit(const char* level, const std::string& stage,
          const std::string& patient, const std::string& message) {
  std::lock_guard<std::mutex> lock(g_mutex);
  if (!g_quiet) {
    std::fprintf(stderr, "[%s] [%s] [%s] %s\n", level, stage.c_str(),
                 patient.empty() ? "-" : patient.c_str(), message.c_str());
  }
}

}  // namespace

void info(const std::string& stage, const std::string& patient,
          const std::string& message) {
  emit("INFO", stage, patient, message);
}

void warn(const std::string& stage, const std::string& patient,
          const std::string& message) {
  emit("WARN", stage, patient, message);
  std::lock_guard<std::mutex> lock(g_mutex);
  g_warnings.push_back(stage + "/" + (patient.empty() ? "-" : patient) + ": " +
                       message);
}

void error(const std::string& stage, const std::string& patient,
           const std::string& message) {
  emit("ERROR", stage, patient, message);
}

std::vector<std::string> take_warnings() {
  std::lock_guard<std::mutex> lock(g_mutex);
  std::vector<std::string> out;
  out.swap(g_warnings);
  return out;
}

void set_quiet(bool quiet) {
  std::lock_guard<std::mutex> lock(g_mutex);
  g_quiet = quiet;
}

}  // namespace mist::log
