// Copyright 2026 The xglk Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef XGLK_WIRE_H_
#define XGLK_WIRE_H_

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "xglk/oracle.h"

namespace xglk {

// Newline-delimited JSON over TCP, one object per line.
//   request   {"id": u64, "x": [f64...]}
//   soft      {"id": u64, "probs": [f64...], "explanation": {...}?}
//   hard      {"id": u64, "label": u32, "explanation": {...}?}
//   error     {"id": u64?, "error": "bad_request" | "shape" | "internal"}
// An explanation object is {"method", "form": "true"|"abs", "score":
// "logit"|"softmax", "values": [f64...]}. Doubles are written in shortest
// round-trip form, so decoding restores the exact bits.

struct Endpoint {
  std::string host = "127.0.0.1";
  uint16_t port = 0;
};

// Accepts "tcp://host:port" or "host:port".
Endpoint ParseEndpoint(const std::string& url);

std::string EncodeRequest(uint64_t id, const Tensor& x);
std::string EncodeResponse(uint64_t id, const OracleResponse& response);
std::string EncodeError(std::optional<uint64_t> id, const std::string& code);

// Decodes a response line. Explanation values are shaped like `x_shape`.
// Error objects raise a protocol error (or a shape error for code "shape").
OracleResponse DecodeResponse(const std::string& line, const Shape& x_shape,
                              uint64_t* id = nullptr);

// Serves one request line against `oracle` and returns the reply line (without
// the trailing newline). Never throws: failures become error objects.
std::string HandleRequestLine(Oracle& oracle, const Shape& input_shape,
                              const std::string& line, QueryLedger* connection);

// Thread-per-connection server. The oracle's own ledger is the global ledger;
// each connection additionally keeps its own.
class OracleServer {
 public:
  // Port 0 picks a free port.
  OracleServer(std::shared_ptr<LocalOracle> oracle, uint16_t port = 0,
               const std::string& address = "127.0.0.1");
  ~OracleServer();
  OracleServer(const OracleServer&) = delete;
  OracleServer& operator=(const OracleServer&) = delete;

  uint16_t port() const { return port_; }
  const QueryLedger& global_ledger() const { return oracle_->ledger(); }
  // Query totals of every connection accepted so far, in accept order.
  std::vector<int64_t> ConnectionCounts() const;

  void Stop();
  // Blocks until Stop() is called from another thread.
  void Wait();

 private:
  struct Impl;
  std::shared_ptr<LocalOracle> oracle_;
  std::unique_ptr<Impl> impl_;
  uint16_t port_ = 0;
};

// Client side of the protocol. Keeps its own ledger of queries it sent.
class RemoteOracle : public Oracle {
 public:
  explicit RemoteOracle(const Endpoint& endpoint);
  ~RemoteOracle() override;

  OracleResponse Query(const Tensor& x,
                       QueryPurpose purpose = QueryPurpose::kEstimation) override;
  const QueryLedger& ledger() const override { return ledger_; }

  // Sends a raw line and returns the raw reply; for protocol tests.
  std::string RoundTrip(const std::string& line);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  QueryLedger ledger_;
  std::mutex mu_;
  uint64_t next_id_ = 0;
};

}  // namespace xglk

#endif  // XGLK_WIRE_H_
