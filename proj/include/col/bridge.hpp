#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "col/perception.hpp"
#include "col/session.hpp"
#include "col/sim.hpp"

namespace col {

inline constexpr int kWireSchemaVersion = 1;

// Server -> console, broadcast at display rate.
struct StateFrame {
  std::string session_id;
  int episode = 0;
  int step = 0;
  VehicleState vehicle;
  PadDetection detection;
  ControlSource control_source = ControlSource::Agent;
  double latest_loss = 0.0;
  EpisodeTag episode_status = EpisodeTag::Running;
  std::uint64_t sequence = 0;
  std::uint64_t decode_failures = 0;
};

// Console -> server: current stick position and trigger.
struct ControlMessage {
  bool override = false;
  double roll = 0.0;
  double pitch = 0.0;
  double yaw = 0.0;
  double throttle = 0.0;
  double client_timestamp = 0.0;

  ActionCommand action() const { return {roll, pitch, yaw, throttle}; }
};

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string encode_frame(const StateFrame& frame);
StateFrame decode_frame(std::string_view text);
std::string encode_control(const ControlMessage& msg);
// Unknown fields are ignored; `override` and the four axes are required.
// Axes are clamped to [-1, 1]. Throws ProtocolError on malformed input.
ControlMessage decode_control(std::string_view text);
std::string encode_handshake(const std::string& session_id, const SessionConfig& cfg);

// Latest-wins single slot for the operator's stick state.
class ControlMailbox {
 public:
  using Clock = std::chrono::steady_clock;

  void put(const ControlMessage& msg, Clock::time_point received = Clock::now());
  void clear();
  // The stored message, unless it is older than max_age.
  std::optional<ControlMessage> fresh(Clock::time_point now,
                                      Clock::duration max_age) const;

 private:
  mutable std::mutex mutex_;
  std::optional<ControlMessage> slot_;
  Clock::time_point received_{};
};

// Live operator behind the mailbox. A stale or missing message counts as
// released override (dead-man).
class MailboxActor final : public Actor {
 public:
  using Clock = ControlMailbox::Clock;

  MailboxActor(const ControlMailbox& mailbox, Clock::duration dead_man,
               std::function<Clock::time_point()> now = [] { return Clock::now(); });

  std::optional<ActionCommand> human_action(const VehicleState& state,
                                            const PadDetection& detection,
                                            SampleSource phase) override;

 private:
  const ControlMailbox& mailbox_;
  Clock::duration dead_man_;
  std::function<Clock::time_point()> now_;
};

struct BridgeConfig {
  std::string address = "127.0.0.1";
  unsigned short port = 8765;  // 0 picks a free port
  double frame_rate_hz = 35.0;
  std::chrono::milliseconds dead_man{500};
  std::string session_id = "session";
  std::optional<std::filesystem::path> static_root;  // console assets
};

struct BridgeStats {
  std::uint64_t frames_sent = 0;
  std::uint64_t frames_dropped = 0;
  std::uint64_t decode_failures = 0;
  std::uint64_t connections = 0;
  bool connected = false;
};

// Websocket endpoint /session. One operator at a time; extra connections are
// refused. Network I/O runs on an internal thread; publish_state() and the
// mailbox are the only points shared with the action loop.
class BridgeServer {
 public:
  BridgeServer(BridgeConfig cfg, SessionConfig session);
  ~BridgeServer();

  BridgeServer(const BridgeServer&) = delete;
  BridgeServer& operator=(const BridgeServer&) = delete;

  void start();
  void stop();
  unsigned short port() const;
  std::chrono::milliseconds dead_man() const;

  ControlMailbox& mailbox();
  // Replaces the state shown in the next broadcast frame.
  void publish_state(const StepEvent& event);
  BridgeStats stats() const;

 private:
  class Impl;
  std::unique_ptr<Impl> impl_;
};

// Runs a live session with the bridge: agent steps are paced in real time,
// the trainer runs on its own thread, and the operator drives through the
// mailbox.
SessionResult serve_session(const SessionConfig& cfg, const TaskConfig& task,
                            const CameraConfig& cam, const TrainerConfig& trainer_cfg,
                            HumanDataset& dataset, Mlp initial_policy, BridgeServer& server,
                            const SessionOutputs& outputs = {});

}  // namespace col
