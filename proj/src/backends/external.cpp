#include "crownstitch/backends/external.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <csignal>
#include <cstring>
#include <thread>

#include "crownstitch/backends/wire.hpp"

namespace crownstitch::backends {

namespace {

using Clock = std::chrono::steady_clock;

int remaining_ms(Clock::time_point deadline) {
  const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
  return left <= 0 ? 0 : static_cast<int>(std::min<long long>(left, 1 << 30));
}

std::string errno_text() { return std::strerror(errno); }

}  // namespace

BackendProcess::BackendProcess(const std::string& command, std::chrono::milliseconds timeout)
    : timeout_(timeout) {
  int in[2], out[2];
  if (::pipe2(in, O_CLOEXEC) != 0) throw BackendError("pipe: " + errno_text());
  if (::pipe2(out, O_CLOEXEC) != 0) {
    ::close(in[0]);
    ::close(in[1]);
    throw BackendError("pipe: " + errno_text());
  }
  const pid_t pid = ::fork();
  if (pid < 0) {
    for (int fd : {in[0], in[1], out[0], out[1]}) ::close(fd);
    throw BackendError("fork: " + errno_text());
  }
  if (pid == 0) {
    // own process group so a timeout can take down the whole pipeline
    ::setpgid(0, 0);
    ::signal(SIGPIPE, SIG_DFL);
    ::dup2(in[0], 0);
    ::dup2(out[1], 1);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::setpgid(pid, pid);
  pid_ = pid;
  ::close(in[0]);
  ::close(out[1]);
  to_child_ = in[1];
  from_child_ = out[0];
  ::fcntl(to_child_, F_SETFL, ::fcntl(to_child_, F_GETFL) | O_NONBLOCK);

  // the destructor does not run if we throw here, so clean up by hand
  nlohmann::json reply;
  try {
    reply = exchange(make_hello_request());
  } catch (...) {
    kill_now();
    throw;
  }
  if (!reply.is_object() || !reply.contains("type") || reply["type"] != "hello") {
    kill_now();
    throw BackendError("backend did not answer the hello request");
  }
  const int protocol = reply.contains("protocol") && reply["protocol"].is_number_integer()
                           ? reply["protocol"].get<int>()
                           : -1;
  if (protocol != kProtocolVersion) {
    kill_now();
    throw ValidationError("backend speaks protocol " + std::to_string(protocol) + ", expected " +
                          std::to_string(kProtocolVersion));
  }
  name_ = reply.contains("name") && reply["name"].is_string() ? reply["name"].get<std::string>() : "external";
}

BackendProcess::~BackendProcess() {
  if (pid_ <= 0) return;
  // EOF on stdin asks the backend to exit; give it a moment before killing.
  ::close(to_child_);
  to_child_ = -1;
  const auto deadline = Clock::now() + std::chrono::milliseconds(500);
  while (Clock::now() < deadline) {
    if (::waitpid(pid_, nullptr, WNOHANG) == pid_) {
      pid_ = -1;
      break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  kill_now();
}

void BackendProcess::kill_now() {
  if (pid_ > 0) {
    ::kill(-pid_, SIGKILL);
    ::waitpid(pid_, nullptr, 0);
    pid_ = -1;
  }
  for (int* fd : {&to_child_, &from_child_}) {
    if (*fd >= 0) ::close(*fd);
    *fd = -1;
  }
}

nlohmann::json BackendProcess::exchange(const nlohmann::json& request) {
  if (!alive()) throw BackendError("backend process is not running");
  const auto deadline = Clock::now() + timeout_;
  const std::string line = request.dump() + "\n";

  std::size_t sent = 0;
  while (sent < line.size()) {
    const ssize_t n = ::write(to_child_, line.data() + sent, line.size() - sent);
    if (n > 0) {
      sent += static_cast<std::size_t>(n);
      continue;
    }
    if (n < 0 && errno == EINTR) continue;
    if (n < 0 && errno != EAGAIN) {
      kill_now();
      throw BackendError("backend process closed its input");
    }
    pollfd p{to_child_, POLLOUT, 0};
    if (::poll(&p, 1, remaining_ms(deadline)) == 0) {
      kill_now();
      throw BackendError("backend timed out after " + std::to_string(timeout_.count()) + " ms");
    }
  }

  std::size_t nl;
  while ((nl = buffer_.find('\n')) == std::string::npos) {
    pollfd p{from_child_, POLLIN, 0};
    const int ready = ::poll(&p, 1, remaining_ms(deadline));
    if (ready < 0 && errno == EINTR) continue;
    if (ready == 0) {
      kill_now();
      throw BackendError("backend timed out after " + std::to_string(timeout_.count()) + " ms");
    }
    char chunk[65536];
    const ssize_t n = ::read(from_child_, chunk, sizeof chunk);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) {
      kill_now();
      throw BackendError("backend process exited unexpectedly");
    }
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
  const std::string reply = buffer_.substr(0, nl);
  buffer_.erase(0, nl + 1);
  try {
    return nlohmann::json::parse(reply);
  } catch (const nlohmann::json::parse_error&) {
    // framing is intact, so the process can stay in the pool
    throw BackendError("backend sent a line that is not JSON: " + reply.substr(0, 200));
  }
}

ExternalBackend::ExternalBackend(ExternalOptions options) : options_(std::move(options)) {
  if (options_.command.empty()) throw ValidationError("external backend needs a command");
  if (options_.processes < 1) throw ValidationError("external backend needs at least one process");
  if (options_.timeout.count() <= 0) throw ValidationError("backend timeout must be positive");
  // a dead backend must surface as EPIPE, not kill us
  std::signal(SIGPIPE, SIG_IGN);
  auto first = std::make_unique<BackendProcess>(options_.command, options_.timeout);
  name_ = first->name();
  idle_.push_back(std::move(first));
  running_ = 1;
}

ExternalBackend::~ExternalBackend() = default;

Capabilities ExternalBackend::capabilities() const { return {true, options_.send_chm, name_}; }

std::unique_ptr<BackendProcess> ExternalBackend::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [&] { return !idle_.empty() || running_ < options_.processes; });
  if (!idle_.empty()) {
    auto p = std::move(idle_.back());
    idle_.pop_back();
    return p;
  }
  ++running_;
  lock.unlock();
  try {
    return std::make_unique<BackendProcess>(options_.command, options_.timeout);
  } catch (const std::exception& e) {
    {
      std::lock_guard relock(mu_);
      --running_;
    }
    cv_.notify_one();
    throw BackendError(std::string("could not restart backend: ") + e.what());
  }
}

void ExternalBackend::release(std::unique_ptr<BackendProcess> proc) {
  {
    std::lock_guard lock(mu_);
    if (proc->alive()) {
      idle_.push_back(std::move(proc));
    } else {
      --running_;
    }
  }
  cv_.notify_one();
}

std::vector<InstancePrediction> ExternalBackend::predict(const raster::TileImage& rgb,
                                                         const raster::TileImage* chm) {
  const nlohmann::json request = make_predict_request(rgb, options_.send_chm ? chm : nullptr);
  auto proc = acquire();
  nlohmann::json reply;
  try {
    reply = proc->exchange(request);
  } catch (...) {
    release(std::move(proc));
    throw;
  }
  release(std::move(proc));
  return parse_result(reply, rgb.rect.id(), rgb.raster.width(), rgb.raster.height());
}

}  // namespace crownstitch::backends
