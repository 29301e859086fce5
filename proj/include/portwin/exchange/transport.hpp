#pragma once

#include <sys/socket.h>
#include <poll.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstring>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "portwin/core/error.hpp"

namespace portwin {

using Bytes = std::vector<std::uint8_t>;

/// Point-to-point message channel between worker contexts. Delivery between
/// a fixed (from, to) pair is ordered; send never blocks the caller.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual int endpoints() const = 0;
  virtual void send(int from, int to, Bytes msg) = 0;
  /// Next message from `from` addressed to `at`, or nullopt on timeout.
  virtual std::optional<Bytes> receive(int at, int from, std::chrono::milliseconds timeout) = 0;
};

/// In-process queues, one per ordered endpoint pair.
class LocalTransport final : public Transport {
 public:
  explicit LocalTransport(int n) : n_(n), queues_(static_cast<std::size_t>(n) * n) {}

  int endpoints() const override { return n_; }

  void send(int from, int to, Bytes msg) override {
    Queue& q = queue(from, to);
    {
      std::lock_guard lock(q.mu);
      q.items.push_back(std::move(msg));
    }
    q.cv.notify_one();
  }

  std::optional<Bytes> receive(int at, int from, std::chrono::milliseconds timeout) override {
    Queue& q = queue(from, at);
    std::unique_lock lock(q.mu);
    if (!q.cv.wait_for(lock, timeout, [&] { return !q.items.empty(); })) return std::nullopt;
    Bytes out = std::move(q.items.front());
    q.items.pop_front();
    return out;
  }

 private:
  struct Queue {
    std::mutex mu;
    std::condition_variable cv;
    std::deque<Bytes> items;
  };
  Queue& queue(int from, int to) { return queues_[static_cast<std::size_t>(from) * n_ + to]; }

  int n_;
  std::vector<Queue> queues_;
};

/// Stream-socket channels (one socketpair per ordered pair) with a writer
/// thread per channel, so a full socket buffer never stalls the sender.
/// Frames are a little-endian u32 length followed by the message bytes.
class SocketTransport final : public Transport {
 public:
  explicit SocketTransport(int n) : n_(n) {
    channels_.reserve(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n * n; ++i) {
      auto ch = std::make_unique<Channel>();
      int fds[2];
      if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0) {
        throw IoError(std::string("socketpair failed: ") + std::strerror(errno));
      }
      ch->write_fd = fds[0];
      ch->read_fd = fds[1];
      Channel* raw = ch.get();
      ch->writer = std::thread([raw] { raw->write_loop(); });
      channels_.push_back(std::move(ch));
    }
  }

  ~SocketTransport() override {
    for (auto& ch : channels_) {
      {
        std::lock_guard lock(ch->mu);
        ch->stop = true;
      }
      ch->cv.notify_one();
      ch->writer.join();
      ::close(ch->write_fd);
      ::close(ch->read_fd);
    }
  }

  SocketTransport(const SocketTransport&) = delete;
  SocketTransport& operator=(const SocketTransport&) = delete;

  int endpoints() const override { return n_; }

  void send(int from, int to, Bytes msg) override {
    Channel& ch = channel(from, to);
    {
      std::lock_guard lock(ch.mu);
      ch.outbox.push_back(std::move(msg));
    }
    ch.cv.notify_one();
  }

  std::optional<Bytes> receive(int at, int from, std::chrono::milliseconds timeout) override {
    Channel& ch = channel(from, at);
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    std::uint8_t hdr[4];
    if (!read_exact(ch.read_fd, hdr, 4, deadline)) return std::nullopt;
    const std::uint32_t len = std::uint32_t(hdr[0]) | (std::uint32_t(hdr[1]) << 8) |
                              (std::uint32_t(hdr[2]) << 16) | (std::uint32_t(hdr[3]) << 24);
    Bytes out(len);
    // Once a header arrived the body follows; do not abandon a half-read frame.
    if (len > 0 && !read_exact(ch.read_fd, out.data(), len,
                               std::chrono::steady_clock::time_point::max())) {
      throw IoError("socket transport: truncated frame");
    }
    return out;
  }

 private:
  struct Channel {
    int write_fd = -1;
    int read_fd = -1;
    std::mutex mu;
    std::condition_variable cv;
    std::deque<Bytes> outbox;
    bool stop = false;
    std::thread writer;

    void write_loop() {
      for (;;) {
        Bytes msg;
        {
          std::unique_lock lock(mu);
          cv.wait(lock, [&] { return stop || !outbox.empty(); });
          if (outbox.empty()) return;
          msg = std::move(outbox.front());
          outbox.pop_front();
        }
        const std::uint32_t len = static_cast<std::uint32_t>(msg.size());
        std::uint8_t hdr[4] = {std::uint8_t(len), std::uint8_t(len >> 8), std::uint8_t(len >> 16),
                               std::uint8_t(len >> 24)};
        write_all(hdr, 4);
        write_all(msg.data(), msg.size());
      }
    }

    void write_all(const std::uint8_t* p, std::size_t n) {
      while (n > 0) {
        const ssize_t w = ::send(write_fd, p, n, MSG_NOSIGNAL);
        if (w < 0) {
          if (errno == EINTR) continue;
          return;
        }
        p += w;
        n -= static_cast<std::size_t>(w);
      }
    }
  };

  static bool read_exact(int fd, std::uint8_t* p, std::size_t n,
                         std::chrono::steady_clock::time_point deadline) {
    while (n > 0) {
      int wait_ms = -1;
      if (deadline != std::chrono::steady_clock::time_point::max()) {
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
            deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) return false;
        wait_ms = static_cast<int>(left.count());
      }
      pollfd pfd{fd, POLLIN, 0};
      const int pr = ::poll(&pfd, 1, wait_ms);
      if (pr < 0 && errno == EINTR) continue;
      if (pr <= 0) return false;
      const ssize_t r = ::recv(fd, p, n, 0);
      if (r < 0 && errno == EINTR) continue;
      if (r <= 0) throw IoError("socket transport: channel closed");
      p += r;
      n -= static_cast<std::size_t>(r);
    }
    return true;
  }

  Channel& channel(int from, int to) { return *channels_[static_cast<std::size_t>(from) * n_ + to]; }

  int n_;
  std::vector<std::unique_ptr<Channel>> channels_;
};

}  // namespace portwin
