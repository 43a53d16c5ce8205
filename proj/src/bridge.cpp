// Copyright 2026 The EHR Audit Authors
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

#include "ehraudit/bridge.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "ehraudit/error.hpp"

namespace ehraudit {

using nlohmann::json;

BridgeModel::BridgeModel(const std::string& command) : command_(command) {
  // A dead server must surface as an error reply, not kill the harness.
  ::signal(SIGPIPE, SIG_IGN);

  int in_pipe[2], out_pipe[2];
  if (::pipe(in_pipe) != 0 || ::pipe(out_pipe) != 0) {
    Fail(ErrorCode::kIo, std::string("pipe failed: ") + std::strerror(errno));
  }
  child_ = ::fork();
  if (child_ < 0) {
    Fail(ErrorCode::kIo, std::string("fork failed: ") + std::strerror(errno));
  }
  if (child_ == 0) {
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    ::close(out_pipe[1]);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  to_child_ = in_pipe[1];
  from_child_ = out_pipe[0];
  ::fcntl(to_child_, F_SETFD, FD_CLOEXEC);
  ::fcntl(from_child_, F_SETFD, FD_CLOEXEC);
  try {
    caps_ = Capabilities::FromJson(Call("capabilities", json::object()));
  } catch (...) {
    Shutdown();
    throw;
  }
}

BridgeModel::~BridgeModel() { Shutdown(); }

void BridgeModel::Shutdown() {
  if (child_ <= 0) return;
  if (to_child_ >= 0) {
    const std::string line =
        json{{"id", next_id_++}, {"op", "shutdown"}, {"payload", json::object()}}
            .dump() +
        "\n";
    [[maybe_unused]] auto n = ::write(to_child_, line.data(), line.size());
    ::close(to_child_);
    to_child_ = -1;
  }
  if (from_child_ >= 0) {
    ::close(from_child_);
    from_child_ = -1;
  }
  int status = 0;
  ::waitpid(child_, &status, 0);
  child_ = -1;
}

void BridgeModel::WriteLine(const std::string& line) {
  std::size_t off = 0;
  while (off < line.size()) {
    const ssize_t n = ::write(to_child_, line.data() + off, line.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      Fail(ErrorCode::kProtocol, "bridge '" + command_ +
                                     "' closed its input: " +
                                     std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
}

std::string BridgeModel::ReadLine() {
  for (;;) {
    const auto pos = read_buffer_.find('\n');
    if (pos != std::string::npos) {
      std::string line = read_buffer_.substr(0, pos);
      read_buffer_.erase(0, pos + 1);
      return line;
    }
    char buf[65536];
    const ssize_t n = ::read(from_child_, buf, sizeof(buf));
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) {
      Fail(ErrorCode::kProtocol,
           "bridge '" + command_ + "' exited before replying");
    }
    read_buffer_.append(buf, static_cast<std::size_t>(n));
  }
}

json BridgeModel::Call(const std::string& op, const json& payload) {
  std::lock_guard<std::mutex> lock(io_mu_);
  if (child_ <= 0) Fail(ErrorCode::kProtocol, "bridge is shut down");
  const std::int64_t id = next_id_++;
  WriteLine(json{{"id", id}, {"op", op}, {"payload", payload}}.dump() + "\n");
  json reply;
  try {
    reply = json::parse(ReadLine());
  } catch (const json::exception& e) {
    Fail(ErrorCode::kProtocol, std::string("bridge reply is not JSON: ") + e.what());
  }
  if (!reply.is_object() || !reply.contains("id") ||
      !(reply["id"].is_number_integer() && reply["id"].get<std::int64_t>() == id)) {
    if (reply.is_object() && reply.contains("error")) {
      Fail(ErrorCode::kProtocol,
           "bridge protocol error: " + reply["error"].value("message", ""));
    }
    Fail(ErrorCode::kProtocol,
         "bridge reply id mismatch for request " + std::to_string(id));
  }
  if (reply.contains("error")) {
    const json& err = reply["error"];
    const std::string code = err.value("code", "error");
    const std::string message = err.value("message", "");
    Fail(code == "capability" ? ErrorCode::kCapabilityMissing
                              : ErrorCode::kProtocol,
         "bridge " + op + " failed (" + code + "): " + message);
  }
  if (!reply.contains("result")) {
    Fail(ErrorCode::kProtocol, "bridge reply has neither result nor error");
  }
  return reply["result"];
}

GenResponse BridgeModel::DoGenerate(const GenRequest& request) {
  const json payload{{"prompt", ToWire(request.prompt.tokens)},
                     {"statics", StaticsToJson(request.prompt.ModelStatics())},
                     {"n", request.n_samples},
                     {"max_new", request.max_new_tokens},
                     {"mode", DecodeModeName(request.mode)},
                     {"seed", request.seed},
                     {"options", request.options}};
  const json result = Call("generate", payload);
  GenResponse r;
  try {
    for (const auto& s : result.at("sequences")) {
      r.sequences.push_back(FromWire(s.get<std::vector<std::string>>()));
    }
  } catch (const json::exception& e) {
    Fail(ErrorCode::kProtocol, std::string("bad generate result: ") + e.what());
  }
  return r;
}

std::vector<double> BridgeModel::DoLogprobs(std::span<const CodeToken> tokens) {
  const json result = Call("logprobs", json{{"tokens", ToWire(tokens)}});
  try {
    return result.at("logprobs").get<std::vector<double>>();
  } catch (const json::exception& e) {
    Fail(ErrorCode::kProtocol, std::string("bad logprobs result: ") + e.what());
  }
}

std::vector<double> BridgeModel::DoEmbed(const EmbedRequest& request) {
  const json result = Call("embed", json{{"tokens", ToWire(request.tokens)},
                                         {"prefix_len", request.prefix_len}});
  try {
    return result.at("embedding").get<std::vector<double>>();
  } catch (const json::exception& e) {
    Fail(ErrorCode::kProtocol, std::string("bad embed result: ") + e.what());
  }
}

}  // namespace ehraudit
