#pragma once

// External exposure controllers speaking a line protocol over stdin/stdout:
//
//   harness -> plugin:  STEP <width> <height> <exposure_ms>\n
//                       <width*height space-separated DN>\n
//   plugin  -> harness: <next_exposure_ms>\n
//
// Every step must be answered within the configured timeout.

#include <cerrno>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>
#include <vector>

#include <fcntl.h>
#include <poll.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include "expobench/controllers.hpp"

namespace expobench {

/// Child process connected through two pipes. Its process group is killed on destruction.
class Subprocess {
 public:
  explicit Subprocess(const std::vector<std::string>& argv) {
    if (argv.empty()) fail(ErrorKind::InvalidArgument, "plugin command is empty");
    ignore_sigpipe();
    int to_child[2];
    int from_child[2];
    if (::pipe(to_child) != 0) fail(ErrorKind::ControllerFault, "pipe() failed");
    if (::pipe(from_child) != 0) {
      ::close(to_child[0]);
      ::close(to_child[1]);
      fail(ErrorKind::ControllerFault, "pipe() failed");
    }
    std::vector<char*> args;
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);

    pid_ = ::fork();
    if (pid_ < 0) fail(ErrorKind::ControllerFault, "fork() failed");
    if (pid_ == 0) {
      ::setpgid(0, 0);  // own group, so teardown also reaches grandchildren
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      ::close(to_child[0]);
      ::close(to_child[1]);
      ::close(from_child[0]);
      ::close(from_child[1]);
      ::execvp(args[0], args.data());
      ::_exit(127);
    }
    ::setpgid(pid_, pid_);  // also from the parent, whichever runs first
    ::close(to_child[0]);
    ::close(from_child[1]);
    write_fd_ = to_child[1];
    read_fd_ = from_child[0];
    ::fcntl(write_fd_, F_SETFL, ::fcntl(write_fd_, F_GETFL) | O_NONBLOCK);
    ::fcntl(read_fd_, F_SETFL, ::fcntl(read_fd_, F_GETFL) | O_NONBLOCK);
  }

  Subprocess(const Subprocess&) = delete;
  Subprocess& operator=(const Subprocess&) = delete;

  ~Subprocess() {
    if (write_fd_ >= 0) ::close(write_fd_);
    if (read_fd_ >= 0) ::close(read_fd_);
    if (pid_ > 0) {
      int status = 0;
      // Give a well-behaved plugin a moment to exit on EOF before killing it.
      for (int i = 0; i < 20; ++i) {
        if (::waitpid(pid_, &status, WNOHANG) == pid_) return;
        ::usleep(5000);
      }
      ::kill(-pid_, SIGKILL);
      ::kill(pid_, SIGKILL);
      ::waitpid(pid_, &status, 0);
    }
  }

  using Clock = std::chrono::steady_clock;

  void write_all(const std::string& data, Clock::time_point deadline) {
    std::size_t off = 0;
    while (off < data.size()) {
      wait_for(write_fd_, POLLOUT, deadline);
      const ssize_t n = ::write(write_fd_, data.data() + off, data.size() - off);
      if (n < 0) {
        if (errno == EAGAIN || errno == EINTR) continue;
        fail(ErrorKind::ControllerFault, "plugin closed its input");
      }
      off += static_cast<std::size_t>(n);
    }
  }

  std::string read_line(Clock::time_point deadline) {
    for (;;) {
      if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        return line;
      }
      wait_for(read_fd_, POLLIN, deadline);
      char chunk[4096];
      const ssize_t n = ::read(read_fd_, chunk, sizeof chunk);
      if (n == 0) fail(ErrorKind::ControllerFault, "plugin exited");
      if (n < 0) {
        if (errno == EAGAIN || errno == EINTR) continue;
        fail(ErrorKind::ControllerFault, "read from plugin failed");
      }
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  static void ignore_sigpipe() {
    struct sigaction sa {};
    sa.sa_handler = SIG_IGN;
    ::sigaction(SIGPIPE, &sa, nullptr);
  }

  static void wait_for(int fd, short events, Clock::time_point deadline) {
    for (;;) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
      if (left <= 0) fail(ErrorKind::ControllerFault, "plugin timed out");
      pollfd p{fd, events, 0};
      const int r = ::poll(&p, 1, static_cast<int>(left));
      if (r > 0) return;
      if (r == 0) fail(ErrorKind::ControllerFault, "plugin timed out");
      if (errno != EINTR) fail(ErrorKind::ControllerFault, "poll() failed");
    }
  }

  pid_t pid_ = -1;
  int write_fd_ = -1;
  int read_fd_ = -1;
  std::string buffer_;
};

/// Serializes one STEP request.
inline std::string encode_step(const Image12& image, ExposureTime exposure) {
  std::string msg = "STEP " + std::to_string(image.width()) + ' ' + std::to_string(image.height()) + ' ';
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", exposure.ms());
  msg += buf;
  msg += '\n';
  msg.reserve(msg.size() + image.size() * 5);
  bool first = true;
  for (auto v : image.pixels()) {
    if (!first) msg += ' ';
    first = false;
    msg += std::to_string(v);
  }
  msg += '\n';
  return msg;
}

/// Controller delegating every step to an external process. The first
/// exposure comes from the same brightness search used by Fix.
class PluginController final : public SearchInitialized {
 public:
  PluginController(ExposureBounds bounds, const ControllerConfig& cfg)
      : SearchInitialized(bounds, cfg.initial_exposure_ms),
        timeout_(std::chrono::duration_cast<Subprocess::Clock::duration>(
            std::chrono::duration<double>(cfg.plugin_timeout_s))),
        process_(cfg.plugin_command) {}

  std::string_view kind() const noexcept override { return "plugin"; }

 protected:
  double next_exposure(const Image12& image) override {
    const auto deadline = Subprocess::Clock::now() + timeout_;
    process_.write_all(encode_step(image, current()), deadline);
    const std::string line = process_.read_line(deadline);
    char* end = nullptr;
    const double value = std::strtod(line.c_str(), &end);
    if (end == line.c_str()) fail(ErrorKind::ControllerFault, "plugin replied with non-numeric '" + line + "'");
    if (!(value >= bounds().min_ms && value <= bounds().max_ms))
      warn("plugin requested " + line + " ms, clamped to [" + std::to_string(bounds().min_ms) + ", " +
           std::to_string(bounds().max_ms) + "]");
    return value;
  }

 private:
  Subprocess::Clock::duration timeout_;
  Subprocess process_;
};

}  // namespace expobench
