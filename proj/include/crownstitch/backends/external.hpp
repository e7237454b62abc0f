#pragma once

#include <chrono>
#include <condition_variable>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "crownstitch/backends/backend.hpp"

namespace crownstitch::backends {

struct ExternalOptions {
  std::string command;  // run through /bin/sh -c
  int processes = 1;    // pool size; each process serves one request at a time
  std::chrono::milliseconds timeout{120000};  // per request, handshake included
  bool send_chm = false;
};

// A running backend process. Not thread-safe; the pool hands each one to a
// single caller at a time.
class BackendProcess {
 public:
  // Spawns the command and performs the hello exchange. A reply with the
  // wrong protocol version is a ValidationError (configuration problem); a
  // process that dies or stays silent is a BackendError.
  BackendProcess(const std::string& command, std::chrono::milliseconds timeout);
  ~BackendProcess();
  BackendProcess(const BackendProcess&) = delete;
  BackendProcess& operator=(const BackendProcess&) = delete;

  const std::string& name() const { return name_; }
  bool alive() const { return pid_ > 0; }

  // One request line out, one reply line back. On timeout or I/O failure the
  // process is killed and BackendError thrown.
  nlohmann::json exchange(const nlohmann::json& request);

 private:
  void kill_now();

  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
  std::string name_;
  std::chrono::milliseconds timeout_;
};

class ExternalBackend : public SegmentationBackend {
 public:
  // Starts the first process eagerly so configuration errors surface before
  // any tile is processed.
  explicit ExternalBackend(ExternalOptions options);
  ~ExternalBackend() override;

  Capabilities capabilities() const override;
  std::vector<InstancePrediction> predict(const raster::TileImage& rgb, const raster::TileImage* chm) override;

 private:
  std::unique_ptr<BackendProcess> acquire();
  void release(std::unique_ptr<BackendProcess> proc);

  ExternalOptions options_;
  std::string name_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::vector<std::unique_ptr<BackendProcess>> idle_;
  int running_ = 0;  // processes alive, idle or busy
};

}  // namespace crownstitch::backends
