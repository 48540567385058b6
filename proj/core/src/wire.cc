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

#include "xglk/wire.h"

#include <sys/socket.h>

#include <atomic>
#include <condition_variable>
#include <istream>
#include <list>

#include <boost/asio.hpp>
#include <nlohmann/json.hpp>

#include "xglk/error.h"

namespace xglk {

namespace asio = boost::asio;
using asio::ip::tcp;
using nlohmann::json;

namespace {

constexpr size_t kMaxLineBytes = size_t{64} << 20;

json ExplanationJson(const Explanation& e) {
  return {{"method", ExplainMethodName(e.method)},
          {"form", ExplanationFormName(e.form)},
          {"score", ScoreKindName(e.selector.kind)},
          {"values", e.values.values()}};
}

ScoreKind ParseWireScoreKind(const std::string& s) {
  if (s == "logit") return ScoreKind::kLogit;
  if (s == "softmax") return ScoreKind::kSoftmax;
  Fail(ErrorKind::kProtocol, "unknown score kind '" + s + "'");
}

}  // namespace

Endpoint ParseEndpoint(const std::string& url) {
  std::string rest = url;
  const std::string scheme = "tcp://";
  if (rest.rfind(scheme, 0) == 0) rest = rest.substr(scheme.size());
  const size_t colon = rest.rfind(':');
  Require(colon != std::string::npos && colon + 1 < rest.size(), ErrorKind::kConfig,
          "endpoint '" + url + "' must look like tcp://host:port");
  Endpoint ep;
  ep.host = rest.substr(0, colon);
  if (ep.host.empty()) ep.host = "127.0.0.1";
  try {
    const unsigned long port = std::stoul(rest.substr(colon + 1));
    Require(port > 0 && port < 65536, ErrorKind::kConfig, "port out of range");
    ep.port = static_cast<uint16_t>(port);
  } catch (const std::logic_error&) {
    Fail(ErrorKind::kConfig, "bad port in endpoint '" + url + "'");
  }
  return ep;
}

std::string EncodeRequest(uint64_t id, const Tensor& x) {
  return json{{"id", id}, {"x", x.values()}}.dump();
}

std::string EncodeResponse(uint64_t id, const OracleResponse& r) {
  json j = {{"id", id}};
  if (r.label) {
    j["label"] = *r.label;
  } else {
    Require(r.probs.has_value(), ErrorKind::kContract, "empty response");
    j["probs"] = r.probs->values();
  }
  if (r.explanation) j["explanation"] = ExplanationJson(*r.explanation);
  return j.dump();
}

std::string EncodeError(std::optional<uint64_t> id, const std::string& code) {
  json j;
  if (id) j["id"] = *id;
  j["error"] = code;
  return j.dump();
}

OracleResponse DecodeResponse(const std::string& line, const Shape& x_shape,
                              uint64_t* id) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    Fail(ErrorKind::kProtocol, std::string("unparseable response: ") + e.what());
  }
  try {
    if (id != nullptr && j.contains("id")) *id = j.at("id").get<uint64_t>();
    if (j.contains("error")) {
      const std::string code = j.at("error").get<std::string>();
      if (code == "shape") Fail(ErrorKind::kShape, "server rejected the input shape");
      Fail(ErrorKind::kProtocol, "server error: " + code);
    }
    OracleResponse r;
    r.query_id = j.at("id").get<uint64_t>();
    if (j.contains("label")) {
      r.label = j.at("label").get<size_t>();
    } else {
      r.probs = Tensor::Vector(j.at("probs").get<std::vector<double>>());
    }
    if (j.contains("explanation")) {
      const json& ej = j.at("explanation");
      Explanation e;
      e.method = ParseExplainMethod(ej.at("method").get<std::string>());
      e.form = ParseExplanationForm(ej.at("form").get<std::string>());
      e.selector.kind = ParseWireScoreKind(ej.value("score", std::string("softmax")));
      e.selector.class_index = r.predicted();
      e.values = Tensor(x_shape, ej.at("values").get<std::vector<double>>());
      r.explanation = std::move(e);
    }
    return r;
  } catch (const json::exception& e) {
    Fail(ErrorKind::kProtocol, std::string("malformed response: ") + e.what());
  }
}

std::string HandleRequestLine(Oracle& oracle, const Shape& input_shape,
                              const std::string& line, QueryLedger* connection) {
  std::optional<uint64_t> id;
  std::vector<double> x;
  try {
    const json j = json::parse(line);
    if (!j.is_object()) return EncodeError(std::nullopt, "bad_request");
    if (j.contains("id") && j.at("id").is_number_unsigned()) id = j.at("id").get<uint64_t>();
    if (!id || !j.contains("x") || !j.at("x").is_array()) {
      return EncodeError(id, "bad_request");
    }
    for (const json& v : j.at("x")) {
      if (!v.is_number()) return EncodeError(id, "bad_request");
      x.push_back(v.get<double>());
    }
  } catch (const json::exception&) {
    return EncodeError(id, "bad_request");
  }
  if (x.size() != ShapeSize(input_shape)) return EncodeError(id, "shape");
  try {
    const OracleResponse r = oracle.Query(Tensor(input_shape, std::move(x)));
    if (connection != nullptr) connection->Charge(QueryPurpose::kEstimation);
    return EncodeResponse(*id, r);
  } catch (const Error& e) {
    return EncodeError(id, e.kind() == ErrorKind::kShape ? "shape" : "internal");
  } catch (const std::exception&) {
    return EncodeError(id, "internal");
  }
}

struct OracleServer::Impl {
  asio::io_context io;
  tcp::acceptor acceptor{io};
  std::thread accept_thread;
  std::atomic<bool> stopping{false};

  struct Connection {
    tcp::socket socket;
    QueryLedger ledger;
    std::thread thread;
    explicit Connection(tcp::socket s) : socket(std::move(s)) {}
  };
  mutable std::mutex mu;
  std::list<Connection> connections;
  std::condition_variable stopped_cv;
  bool stopped = false;
};

OracleServer::OracleServer(std::shared_ptr<LocalOracle> oracle, uint16_t port,
                           const std::string& address)
    : oracle_(std::move(oracle)), impl_(std::make_unique<Impl>()) {
  Require(oracle_ != nullptr, ErrorKind::kContract, "server needs an oracle");
  try {
    const tcp::endpoint ep(asio::ip::make_address(address), port);
    impl_->acceptor.open(ep.protocol());
    impl_->acceptor.set_option(tcp::acceptor::reuse_address(true));
    impl_->acceptor.bind(ep);
    impl_->acceptor.listen();
    port_ = impl_->acceptor.local_endpoint().port();
  } catch (const boost::system::system_error& e) {
    Fail(ErrorKind::kIo, std::string("cannot listen: ") + e.what());
  }
  const Shape shape = oracle_->model().input_shape();
  impl_->accept_thread = std::thread([this, shape] {
    for (;;) {
      tcp::socket socket(impl_->io);
      boost::system::error_code ec;
      impl_->acceptor.accept(socket, ec);
      if (impl_->stopping.load()) break;
      if (ec) continue;
      socket.set_option(tcp::no_delay(true), ec);
      std::lock_guard<std::mutex> lock(impl_->mu);
      Impl::Connection& conn = impl_->connections.emplace_back(std::move(socket));
      conn.thread = std::thread([this, &conn, shape] {
        asio::streambuf buf(kMaxLineBytes);
        std::istream in(&buf);
        for (;;) {
          boost::system::error_code rec;
          asio::read_until(conn.socket, buf, '\n', rec);
          if (rec) break;
          std::string line;
          std::getline(in, line);
          if (!line.empty() && line.back() == '\r') line.pop_back();
          const std::string reply =
              HandleRequestLine(*oracle_, shape, line, &conn.ledger) + "\n";
          asio::write(conn.socket, asio::buffer(reply), rec);
          if (rec) break;
        }
      });
    }
  });
}

OracleServer::~OracleServer() { Stop(); }

std::vector<int64_t> OracleServer::ConnectionCounts() const {
  std::lock_guard<std::mutex> lock(impl_->mu);
  std::vector<int64_t> out;
  for (const auto& c : impl_->connections) out.push_back(c.ledger.count());
  return out;
}

void OracleServer::Stop() {
  if (impl_->stopping.exchange(true)) return;
  {
    // Wake the blocking accept with a throwaway connection.
    boost::system::error_code ec;
    tcp::socket poke(impl_->io);
    poke.connect(tcp::endpoint(asio::ip::make_address("127.0.0.1"), port_), ec);
  }
  if (impl_->accept_thread.joinable()) impl_->accept_thread.join();
  boost::system::error_code ec;
  impl_->acceptor.close(ec);
  std::lock_guard<std::mutex> lock(impl_->mu);
  for (auto& c : impl_->connections) {
    ::shutdown(c.socket.native_handle(), SHUT_RDWR);
  }
  for (auto& c : impl_->connections) {
    if (c.thread.joinable()) c.thread.join();
  }
  impl_->stopped = true;
  impl_->stopped_cv.notify_all();
}

void OracleServer::Wait() {
  std::unique_lock<std::mutex> lock(impl_->mu);
  impl_->stopped_cv.wait(lock, [this] { return impl_->stopped; });
}

struct RemoteOracle::Impl {
  asio::io_context io;
  tcp::socket socket{io};
  asio::streambuf buf{kMaxLineBytes};
};

RemoteOracle::RemoteOracle(const Endpoint& endpoint)
    : impl_(std::make_unique<Impl>()) {
  try {
    tcp::resolver resolver(impl_->io);
    asio::connect(impl_->socket,
                  resolver.resolve(endpoint.host, std::to_string(endpoint.port)));
    impl_->socket.set_option(tcp::no_delay(true));
  } catch (const boost::system::system_error& e) {
    Fail(ErrorKind::kIo, "cannot connect to " + endpoint.host + ":" +
                             std::to_string(endpoint.port) + ": " + e.what());
  }
}

RemoteOracle::~RemoteOracle() = default;

std::string RemoteOracle::RoundTrip(const std::string& line) {
  try {
    asio::write(impl_->socket, asio::buffer(line + "\n"));
    asio::read_until(impl_->socket, impl_->buf, '\n');
  } catch (const boost::system::system_error& e) {
    Fail(ErrorKind::kIo, std::string("oracle connection failed: ") + e.what());
  }
  std::istream in(&impl_->buf);
  std::string reply;
  std::getline(in, reply);
  return reply;
}

OracleResponse RemoteOracle::Query(const Tensor& x, QueryPurpose purpose) {
  std::lock_guard<std::mutex> lock(mu_);
  const uint64_t id = next_id_++;
  const std::string reply = RoundTrip(EncodeRequest(id, x));
  uint64_t echoed = ~uint64_t{0};
  OracleResponse r = DecodeResponse(reply, x.shape(), &echoed);
  Require(echoed == id, ErrorKind::kProtocol, "response id does not match request");
  ledger_.Charge(purpose);
  return r;
}

}  // namespace xglk
