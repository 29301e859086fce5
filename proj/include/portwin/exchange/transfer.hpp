#pragma once

#include <chrono>
#include <cstdint>
#include <cstring>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "portwin/core/error.hpp"
#include "portwin/exchange/transport.hpp"
#include "portwin/exchange/worker_group.hpp"
#include "portwin/grid/data_grid.hpp"
#include "portwin/grid/uid.hpp"

namespace portwin {

/// One point-to-point data movement between two block fields. Values are
/// gathered at `src_index` (averaged in consecutive groups of `group` when
/// group > 1) and scattered to `dst_index`. Indices are GhostArray offsets.
struct Transfer {
  int src_level = 0;
  int src_block = 0;
  int dst_level = 0;
  int dst_block = 0;
  Uid src_uid;
  Uid dst_uid;
  int group = 1;
  std::vector<std::uint32_t> src_index;
  std::vector<std::uint32_t> dst_index;
};

/// Owner worker of every (level, block).
using Ownership = std::vector<std::vector<int>>;

/// Resolves a block field for the engine.
class FieldAccess {
 public:
  virtual ~FieldAccess() = default;
  virtual ScalarField& field(int level, int block, int field) = 0;
};

/// A transfer list with its per-worker schedule precomputed.
class TransferSet {
 public:
  TransferSet() = default;
  TransferSet(std::vector<Transfer> transfers, const Ownership& owners, int workers)
      : transfers_(std::move(transfers)),
        outgoing_(static_cast<std::size_t>(workers)),
        incoming_(static_cast<std::size_t>(workers),
                  std::vector<std::vector<int>>(static_cast<std::size_t>(workers))) {
    for (int t = 0; t < static_cast<int>(transfers_.size()); ++t) {
      const Transfer& tr = transfers_[t];
      const int so = owners.at(tr.src_level).at(tr.src_block);
      const int dw = owners.at(tr.dst_level).at(tr.dst_block);
      src_owner_.push_back(so);
      dst_owner_.push_back(dw);
      outgoing_[so].push_back(t);
      if (so != dw) incoming_[dw][so].push_back(t);
    }
  }

  const std::vector<Transfer>& transfers() const { return transfers_; }
  bool empty() const { return transfers_.empty(); }

 private:
  friend class Cluster;
  std::vector<Transfer> transfers_;
  std::vector<int> src_owner_;
  std::vector<int> dst_owner_;
  std::vector<std::vector<int>> outgoing_;
  std::vector<std::vector<std::vector<int>>> incoming_;  // [dst worker][src worker]
};

/// Worker threads plus the message transport between them.
class Cluster {
 public:
  explicit Cluster(int workers, std::unique_ptr<Transport> transport = nullptr,
                   std::chrono::milliseconds timeout = std::chrono::seconds(20))
      : group_(workers),
        transport_(transport ? std::move(transport)
                             : std::make_unique<LocalTransport>(workers < 1 ? 1 : workers)),
        timeout_(timeout) {
    if (transport_->endpoints() != group_.size()) {
      throw ConfigError("transport endpoint count differs from worker count");
    }
  }

  int workers() const { return group_.size(); }
  void run(const std::function<void(int)>& fn) { group_.run(fn); }
  Transport& transport() { return *transport_; }
  void set_timeout(std::chrono::milliseconds t) { timeout_ = t; }
  std::uint64_t messages_sent() const { return messages_sent_; }

  /// Executes every transfer for each listed field. Completion is a barrier.
  void execute(const TransferSet& ts, FieldAccess& access, std::span<const int> fields) {
    execute(ts, access, fields, fields);
  }

  /// As above, but values read from `src_fields[i]` land in `dst_fields[i]`.
  void execute(const TransferSet& ts, FieldAccess& access, std::span<const int> src_fields,
               std::span<const int> dst_fields) {
    if (ts.empty()) return;
    if (src_fields.size() != dst_fields.size()) throw PreconditionError("field list size mismatch");
    std::span<const int> fields = src_fields;
    const std::uint32_t epoch = ++epoch_;
    std::vector<std::uint64_t> sent(static_cast<std::size_t>(workers()), 0);
    group_.run([&](int w) {
      std::vector<double> values;
      for (int t : ts.outgoing_[w]) {
        const Transfer& tr = ts.transfers_[t];
        gather(tr, access, fields, values);
        if (ts.dst_owner_[t] == w) {
          scatter(tr, access, dst_fields, values.data());
        } else {
          ts_send(w, ts.dst_owner_[t], epoch, t, tr, values);
          ++sent[w];
        }
      }
      for (int src = 0; src < workers(); ++src) {
        for (int t : ts.incoming_[w][src]) {
          const Transfer& tr = ts.transfers_[t];
          auto msg = transport_->receive(w, src, timeout_);
          if (!msg) {
            throw ExchangeFault(tr.src_uid.packed, tr.dst_uid.packed,
                                "exchange timeout: missing message " +
                                    std::to_string(tr.src_uid.packed) + " -> " +
                                    std::to_string(tr.dst_uid.packed));
          }
          decode(*msg, epoch, t, tr, fields.size(), values);
          scatter(tr, access, dst_fields, values.data());
        }
      }
    });
    for (auto s : sent) messages_sent_ += s;
  }

 private:
  static constexpr std::size_t kHeader = 4 + 4 + 8 + 8 + 4 + 4;  // padded

  static std::size_t values_per_field(const Transfer& tr) { return tr.dst_index.size(); }

  static void gather(const Transfer& tr, FieldAccess& access, std::span<const int> fields,
                     std::vector<double>& out) {
    const std::size_t m = values_per_field(tr);
    out.resize(m * fields.size());
    std::size_t o = 0;
    for (int f : fields) {
      const ScalarField& src = access.field(tr.src_level, tr.src_block, f);
      if (tr.group == 1) {
        for (std::size_t i = 0; i < m; ++i) out[o++] = src[tr.src_index[i]];
      } else {
        const double inv = 1.0 / tr.group;
        std::size_t s = 0;
        for (std::size_t i = 0; i < m; ++i) {
          double acc = 0;
          for (int g = 0; g < tr.group; ++g) acc += src[tr.src_index[s++]];
          out[o++] = acc * inv;
        }
      }
    }
  }

  static void scatter(const Transfer& tr, FieldAccess& access, std::span<const int> fields,
                      const double* values) {
    const std::size_t m = values_per_field(tr);
    std::size_t o = 0;
    for (int f : fields) {
      ScalarField& dst = access.field(tr.dst_level, tr.dst_block, f);
      for (std::size_t i = 0; i < m; ++i) dst[tr.dst_index[i]] = values[o++];
    }
  }

  void ts_send(int from, int to, std::uint32_t epoch, int t, const Transfer& tr,
               const std::vector<double>& values) {
    Bytes msg(kHeader + values.size() * sizeof(double));
    std::uint8_t* p = msg.data();
    auto put = [&](auto v) {
      std::memcpy(p, &v, sizeof(v));
      p += sizeof(v);
    };
    put(epoch);
    put(static_cast<std::uint32_t>(t));
    put(tr.src_uid.packed);
    put(tr.dst_uid.packed);
    put(static_cast<std::uint32_t>(values.size()));
    put(std::uint32_t{0});
    if (!values.empty()) std::memcpy(p, values.data(), values.size() * sizeof(double));
    transport_->send(from, to, std::move(msg));
  }

  static void decode(const Bytes& msg, std::uint32_t epoch, int t, const Transfer& tr,
                     std::size_t nfields, std::vector<double>& out) {
    auto fault = [&](const std::string& why) {
      return ExchangeFault(tr.src_uid.packed, tr.dst_uid.packed,
                           "exchange fault " + std::to_string(tr.src_uid.packed) + " -> " +
                               std::to_string(tr.dst_uid.packed) + ": " + why);
    };
    if (msg.size() < kHeader) throw fault("short message");
    std::uint32_t e, idx, count;
    std::uint64_t s, d;
    const std::uint8_t* p = msg.data();
    std::memcpy(&e, p, 4);
    std::memcpy(&idx, p + 4, 4);
    std::memcpy(&s, p + 8, 8);
    std::memcpy(&d, p + 16, 8);
    std::memcpy(&count, p + 24, 4);
    if (e != epoch) throw fault("message from another exchange phase");
    if (idx != static_cast<std::uint32_t>(t) || s != tr.src_uid.packed || d != tr.dst_uid.packed) {
      throw fault("out-of-order message");
    }
    if (count != values_per_field(tr) * nfields || msg.size() != kHeader + count * sizeof(double)) {
      throw fault("payload size mismatch");
    }
    out.resize(count);
    if (count > 0) std::memcpy(out.data(), p + kHeader, count * sizeof(double));
  }

  WorkerGroup group_;
  std::unique_ptr<Transport> transport_;
  std::chrono::milliseconds timeout_;
  std::uint32_t epoch_ = 0;
  std::uint64_t messages_sent_ = 0;
};

}  // namespace portwin
