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

// Client side of the model bridge: runs an external model server as a child
// process and speaks line-delimited JSON over its stdin/stdout.
//
// Request:  {"id": <int>, "op": "capabilities"|"generate"|"logprobs"|
//            "embed"|"shutdown", "payload": {...}}
// Reply:    {"id": <int>, "result": {...}} or
//           {"id": <int|null>, "error": {"code": str, "message": str}}
//
// Payloads:
//   generate  {"prompt": [tok...], "statics": {...}, "n": int,
//              "max_new": int, "mode": "sample"|"greedy", "seed": int,
//              "options": {...}}        -> {"sequences": [[tok...]...]}
//   logprobs  {"tokens": [tok...]}      -> {"logprobs": [real...]}
//   embed     {"tokens": [tok...], "prefix_len": int}
//                                       -> {"embedding": [real...]}

#ifndef EHRAUDIT_BRIDGE_HPP_
#define EHRAUDIT_BRIDGE_HPP_

#include <sys/types.h>

#include <cstdint>
#include <mutex>
#include <string>

#include <nlohmann/json.hpp>

#include "ehraudit/model.hpp"

namespace ehraudit {

class BridgeModel : public Model {
 public:
  // Spawns `/bin/sh -c command` and queries its capabilities.
  explicit BridgeModel(const std::string& command);
  ~BridgeModel() override;

  BridgeModel(const BridgeModel&) = delete;
  BridgeModel& operator=(const BridgeModel&) = delete;

  Capabilities capabilities() const override { return caps_; }

  // Sends one request and waits for its reply; throws kProtocol on an error
  // reply, a mismatched id or a dead server. Exposed for conformance tests.
  nlohmann::json Call(const std::string& op, const nlohmann::json& payload);

 protected:
  GenResponse DoGenerate(const GenRequest& request) override;
  std::vector<double> DoLogprobs(std::span<const CodeToken> tokens) override;
  std::vector<double> DoEmbed(const EmbedRequest& request) override;

 private:
  void WriteLine(const std::string& line);
  std::string ReadLine();
  void Shutdown();

  std::string command_;
  pid_t child_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string read_buffer_;
  std::int64_t next_id_ = 1;
  std::mutex io_mu_;
  Capabilities caps_;
};

}  // namespace ehraudit

#endif  // EHRAUDIT_BRIDGE_HPP_
