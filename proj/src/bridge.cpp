#include "col/bridge.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "json.hpp"

namespace col {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using json = nlohmann::json;

namespace {

json vec3(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

Eigen::Vector3d read_vec3(const json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

EpisodeTag parse_episode_tag(const std::string& s) {
  for (auto tag : {EpisodeTag::Running, EpisodeTag::LandedSuccess, EpisodeTag::LandedFailure,
                   EpisodeTag::Timeout})
    if (to_string(tag) == s) return tag;
  throw ProtocolError("unknown episode status '" + s + "'");
}

double required_axis(const json& j, const char* name) {
  auto it = j.find(name);
  if (it == j.end() || !it->is_number())
    throw ProtocolError(std::string("control message: missing or non-numeric '") + name + "'");
  const double v = it->get<double>();
  if (!std::isfinite(v)) throw ProtocolError(std::string("control message: non-finite ") + name);
  return std::clamp(v, -1.0, 1.0);
}

}  // namespace

std::string encode_frame(const StateFrame& f) {
  json j;
  j["type"] = "frame";
  j["session_id"] = f.session_id;
  j["episode"] = f.episode;
  j["step"] = f.step;
  j["vehicle"] = {{"position", vec3(f.vehicle.position)},
                  {"velocity", vec3(f.vehicle.velocity)},
                  {"attitude", vec3(f.vehicle.attitude)},
                  {"angular_rate", vec3(f.vehicle.angular_rate)}};
  j["detection"] = {{"u", f.detection.u},
                    {"v", f.detection.v},
                    {"radius_px", f.detection.radius_px},
                    {"visible", f.detection.visible}};
  j["control_source"] = to_string(f.control_source);
  j["latest_loss"] = f.latest_loss;
  j["episode_status"] = to_string(f.episode_status);
  j["sequence"] = f.sequence;
  j["decode_failures"] = f.decode_failures;
  return j.dump();
}

StateFrame decode_frame(std::string_view text) {
  try {
    const json j = json::parse(text);
    if (j.value("type", "") != "frame") throw ProtocolError("not a frame message");
    StateFrame f;
    f.session_id = j.at("session_id").get<std::string>();
    f.episode = j.at("episode").get<int>();
    f.step = j.at("step").get<int>();
    const json& v = j.at("vehicle");
    f.vehicle.position = read_vec3(v.at("position"));
    f.vehicle.velocity = read_vec3(v.at("velocity"));
    f.vehicle.attitude = read_vec3(v.at("attitude"));
    f.vehicle.angular_rate = read_vec3(v.at("angular_rate"));
    f.vehicle.time_step = f.step;
    const json& d = j.at("detection");
    f.detection = {d.at("u").get<double>(), d.at("v").get<double>(),
                   d.at("radius_px").get<double>(), d.at("visible").get<bool>()};
    f.control_source =
        j.at("control_source").get<std::string>() == "human" ? ControlSource::Human
                                                             : ControlSource::Agent;
    f.latest_loss = j.at("latest_loss").get<double>();
    f.episode_status = parse_episode_tag(j.at("episode_status").get<std::string>());
    f.sequence = j.at("sequence").get<std::uint64_t>();
    f.decode_failures = j.at("decode_failures").get<std::uint64_t>();
    return f;
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed frame: ") + e.what());
  }
}

std::string encode_control(const ControlMessage& m) {
  json j;
  j["type"] = "control";
  j["override"] = m.override;
  j["roll"] = m.roll;
  j["pitch"] = m.pitch;
  j["yaw"] = m.yaw;
  j["throttle"] = m.throttle;
  j["client_timestamp"] = m.client_timestamp;
  return j.dump();
}

ControlMessage decode_control(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("control message is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ProtocolError("control message must be an object");
  auto ov = j.find("override");
  if (ov == j.end() || !ov->is_boolean())
    throw ProtocolError("control message: missing or non-boolean 'override'");
  ControlMessage m;
  m.override = ov->get<bool>();
  m.roll = required_axis(j, "roll");
  m.pitch = required_axis(j, "pitch");
  m.yaw = required_axis(j, "yaw");
  m.throttle = required_axis(j, "throttle");
  if (auto ts = j.find("client_timestamp"); ts != j.end() && ts->is_number())
    m.client_timestamp = ts->get<double>();
  return m;
}

std::string encode_handshake(const std::string& session_id, const SessionConfig& cfg) {
  json j;
  j["type"] = "hello";
  j["schema_version"] = kWireSchemaVersion;
  j["session_id"] = session_id;
  j["session"] = {{"mode", to_string(cfg.mode)},
                  {"n_episodes", cfg.n_episodes},
                  {"actor", to_string(cfg.actor)},
                  {"performance_threshold", cfg.performance_threshold},
                  {"seed", cfg.seed}};
  return j.dump();
}

void ControlMailbox::put(const ControlMessage& msg, Clock::time_point received) {
  std::lock_guard lock(mutex_);
  slot_ = msg;
  received_ = received;
}

void ControlMailbox::clear() {
  std::lock_guard lock(mutex_);
  slot_.reset();
}

std::optional<ControlMessage> ControlMailbox::fresh(Clock::time_point now,
                                                    Clock::duration max_age) const {
  std::lock_guard lock(mutex_);
  if (!slot_ || now - received_ > max_age) return std::nullopt;
  return slot_;
}

MailboxActor::MailboxActor(const ControlMailbox& mailbox, Clock::duration dead_man,
                           std::function<Clock::time_point()> now)
    : mailbox_(mailbox), dead_man_(dead_man), now_(std::move(now)) {}

std::optional<ActionCommand> MailboxActor::human_action(const VehicleState&, const PadDetection&,
                                                        SampleSource phase) {
  const auto msg = mailbox_.fresh(now_(), dead_man_);
  if (!msg) return std::nullopt;
  // Demonstration phases force the override on while the operator is present.
  if (phase == SampleSource::Intervention && !msg->override) return std::nullopt;
  return msg->action().clamped();
}

// ---------------------------------------------------------------------------

class BridgeServer::Impl {
 public:
  Impl(BridgeConfig cfg, SessionConfig session)
      : cfg_(std::move(cfg)), session_(session), acceptor_(ioc_), timer_(ioc_) {}

  ~Impl() { stop(); }

  void start() {
    const tcp::endpoint ep(net::ip::make_address(cfg_.address), cfg_.port);
    acceptor_.open(ep.protocol());
    acceptor_.set_option(net::socket_base::reuse_address(true));
    acceptor_.bind(ep);
    acceptor_.listen();
    port_ = acceptor_.local_endpoint().port();
    do_accept();
    schedule_frame();
    thread_ = std::thread([this] { ioc_.run(); });
  }

  void stop() {
    if (!thread_.joinable()) return;
    net::post(ioc_, [this] {
      beast::error_code ec;
      acceptor_.close(ec);
      timer_.cancel();
      if (conn_) conn_->close();
    });
    // Let close handshakes finish briefly, then stop the loop.
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    ioc_.stop();
    thread_.join();
    conn_.reset();
  }

  unsigned short port() const { return port_; }
  std::chrono::milliseconds dead_man() const { return cfg_.dead_man; }
  ControlMailbox& mailbox() { return mailbox_; }

  void publish_state(const StepEvent& e) {
    std::lock_guard lock(state_mutex_);
    latest_.session_id = cfg_.session_id;
    latest_.episode = e.episode;
    latest_.step = e.state->time_step;
    latest_.vehicle = *e.state;
    latest_.detection = *e.detection;
    latest_.control_source = e.outcome->source;
    latest_.latest_loss = e.trainer.last_loss;
    latest_.episode_status = e.outcome->status.tag;
    have_state_ = true;
  }

  BridgeStats stats() const {
    BridgeStats s;
    s.frames_sent = frames_sent_.load();
    s.frames_dropped = frames_dropped_.load();
    s.decode_failures = decode_failures_.load();
    s.connections = connections_.load();
    s.connected = connected_.load();
    return s;
  }

 private:
  class Connection : public std::enable_shared_from_this<Connection> {
   public:
    Connection(Impl& owner, tcp::socket socket) : owner_(owner), ws_(std::move(socket)) {}

    void run(http::request<http::string_body> req) {
      ws_.text(true);
      ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
        if (ec) return self->on_closed();
        self->open_ = true;
        self->owner_.connected_ = true;
        self->send(encode_handshake(self->owner_.cfg_.session_id, self->owner_.session_));
        self->read();
      });
    }

    bool busy() const { return writing_; }
    bool open() const { return open_; }

    void send(std::string text) {
      writing_ = true;
      out_ = std::move(text);
      ws_.async_write(net::buffer(out_), [self = shared_from_this()](beast::error_code ec,
                                                                     std::size_t) {
        self->writing_ = false;
        if (ec) self->on_closed();
      });
    }

    void close() {
      if (!open_) return;
      ws_.async_close(websocket::close_code::going_away,
                      [self = shared_from_this()](beast::error_code) { self->on_closed(); });
    }

   private:
    void read() {
      ws_.async_read(in_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
        if (ec) return self->on_closed();
        const std::string text = beast::buffers_to_string(self->in_.data());
        self->in_.consume(self->in_.size());
        try {
          self->owner_.mailbox_.put(decode_control(text));
        } catch (const ProtocolError&) {
          ++self->owner_.decode_failures_;
        }
        self->read();
      });
    }

    void on_closed() {
      if (closed_) return;
      closed_ = true;
      open_ = false;
      // Disconnect releases the override.
      owner_.mailbox_.clear();
      owner_.connected_ = false;
      if (owner_.conn_.get() == this) owner_.conn_.reset();
    }

    Impl& owner_;
    websocket::stream<beast::tcp_stream> ws_;
    beast::flat_buffer in_;
    std::string out_;
    bool writing_ = false;
    bool open_ = false;
    bool closed_ = false;
  };

  // Plain HTTP: upgrade /session to a websocket, serve console files, or refuse.
  class HttpSession : public std::enable_shared_from_this<HttpSession> {
   public:
    HttpSession(Impl& owner, tcp::socket socket) : owner_(owner), stream_(std::move(socket)) {}

    void run() {
      stream_.expires_after(std::chrono::seconds(10));
      http::async_read(stream_, buffer_, req_,
                       [self = shared_from_this()](beast::error_code ec, std::size_t) {
                         if (!ec) self->on_request();
                       });
    }

   private:
    void on_request() {
      if (websocket::is_upgrade(req_)) {
        if (req_.target() != "/session") return respond(http::status::not_found, "no such endpoint");
        if (owner_.conn_ && owner_.conn_->open())
          return respond(http::status::conflict, "an operator is already connected");
        stream_.expires_never();
        auto conn = std::make_shared<Connection>(owner_, stream_.release_socket());
        owner_.conn_ = conn;
        ++owner_.connections_;
        conn->run(std::move(req_));
        return;
      }
      if (req_.method() == http::verb::get && owner_.cfg_.static_root) {
        std::string target(req_.target());
        if (target == "/") target = "/index.html";
        if (target.find("..") == std::string::npos) {
          std::ifstream in(*owner_.cfg_.static_root / target.substr(1), std::ios::binary);
          if (in) {
            std::stringstream body;
            body << in.rdbuf();
            return respond(http::status::ok, body.str());
          }
        }
      }
      respond(http::status::not_found, "not found");
    }

    void respond(http::status status, std::string body) {
      auto res = std::make_shared<http::response<http::string_body>>(status, req_.version());
      res->set(http::field::content_type, "text/plain");
      res->body() = std::move(body);
      res->keep_alive(false);
      res->prepare_payload();
      http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code,
                                                                        std::size_t) {
        beast::error_code ec;
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
      });
    }

    Impl& owner_;
    beast::tcp_stream stream_;
    beast::flat_buffer buffer_;
    http::request<http::string_body> req_;
  };

  void do_accept() {
    acceptor_.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;  // acceptor closed
      std::make_shared<HttpSession>(*this, std::move(socket))->run();
      do_accept();
    });
  }

  void schedule_frame() {
    const auto period = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(1.0 / cfg_.frame_rate_hz));
    next_frame_ = next_frame_ == std::chrono::steady_clock::time_point{}
                      ? std::chrono::steady_clock::now() + period
                      : next_frame_ + period;
    timer_.expires_at(next_frame_);
    timer_.async_wait([this](beast::error_code ec) {
      if (ec) return;
      broadcast();
      schedule_frame();
    });
  }

  void broadcast() {
    if (!conn_ || !conn_->open()) return;
    StateFrame frame;
    {
      std::lock_guard lock(state_mutex_);
      if (!have_state_) return;
      frame = latest_;
    }
    // A slow client drops frames instead of queueing them.
    if (conn_->busy()) {
      ++frames_dropped_;
      return;
    }
    frame.sequence = ++sequence_;
    frame.decode_failures = decode_failures_.load();
    conn_->send(encode_frame(frame));
    ++frames_sent_;
  }

  BridgeConfig cfg_;
  SessionConfig session_;
  net::io_context ioc_;
  tcp::acceptor acceptor_;
  net::steady_timer timer_;
  std::chrono::steady_clock::time_point next_frame_{};
  std::thread thread_;
  unsigned short port_ = 0;

  std::shared_ptr<Connection> conn_;  // io thread only
  ControlMailbox mailbox_;

  std::mutex state_mutex_;
  StateFrame latest_;
  bool have_state_ = false;

  std::uint64_t sequence_ = 0;
  std::atomic<std::uint64_t> frames_sent_{0};
  std::atomic<std::uint64_t> frames_dropped_{0};
  std::atomic<std::uint64_t> decode_failures_{0};
  std::atomic<std::uint64_t> connections_{0};
  std::atomic<bool> connected_{false};
};

BridgeServer::BridgeServer(BridgeConfig cfg, SessionConfig session)
    : impl_(std::make_unique<Impl>(std::move(cfg), session)) {}

BridgeServer::~BridgeServer() = default;

void BridgeServer::start() { impl_->start(); }
void BridgeServer::stop() { impl_->stop(); }
unsigned short BridgeServer::port() const { return impl_->port(); }
std::chrono::milliseconds BridgeServer::dead_man() const { return impl_->dead_man(); }
ControlMailbox& BridgeServer::mailbox() { return impl_->mailbox(); }
void BridgeServer::publish_state(const StepEvent& event) { impl_->publish_state(event); }
BridgeStats BridgeServer::stats() const { return impl_->stats(); }

SessionResult serve_session(const SessionConfig& cfg, const TaskConfig& task,
                            const CameraConfig& cam, const TrainerConfig& trainer_cfg,
                            HumanDataset& dataset, Mlp initial_policy, BridgeServer& server,
                            const SessionOutputs& outputs) {
  SessionConfig live = cfg;
  live.actor = ActorKind::LiveHuman;
  live.real_time = true;
  live.threaded_trainer = true;
  MailboxActor actor(server.mailbox(), server.dead_man());
  SessionOutputs out = outputs;
  out.on_step = [&server, user = outputs.on_step](const StepEvent& e) {
    server.publish_state(e);
    if (user) user(e);
  };
  return run_session(live, task, cam, trainer_cfg, actor, dataset, std::move(initial_policy), out);
}

}  // namespace col
