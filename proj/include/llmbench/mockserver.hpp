#pragma once

// Deterministic OpenAI-compatible streaming backend used as the ground-truth
// oracle for timing and scheduling measurements. Chunk timing follows an
// absolute schedule (no drift accumulation):
//
//   content chunk i   at  t_acquire + ttft_s + i * per_token_delay_s
//   usage + [DONE]    at  t_acquire + ttft_s + N * per_token_delay_s
//
// so a stream with N tokens spans ttft + N * per_token after its capacity
// slot is granted, and measured TPOT over the stream equals per_token_delay.

#include <atomic>
#include <cctype>
#include <condition_variable>
#include <cstdint>
#include <fstream>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include "llmbench/clock.hpp"
#include "llmbench/http.hpp"
#include "llmbench/rng.hpp"
#include "llmbench/sse.hpp"

namespace llmbench {

enum class QueuePolicy { fifo_queue, reject_503 };

struct MockProfile {
    double init_delay_s = 0.0;       // process start -> TCP accept
    double load_delay_s = 0.0;       // TCP accept -> readiness
    double ttft_s = 0.02;
    double per_token_delay_s = 0.0;
    uint32_t tokens_per_response = 16;
    uint32_t capacity = 1024;
    QueuePolicy queue_policy = QueuePolicy::fifo_queue;
    double jitter_s = 0.0;           // uniform half-width added to each gap
    bool emit_usage = true;
    uint64_t usage_tokens_override = 0;  // nonzero: forced usage.completion_tokens
    std::string canned_responses_path;   // JSONL {prompt_substring, response}

    static MockProfile load(const std::string& path) {
        YAML::Node n;
        try {
            n = YAML::LoadFile(path);
        } catch (const YAML::Exception& e) {
            throw std::runtime_error("mock profile " + path + ": " + e.what());
        }
        MockProfile p;
        if (n["init_delay_s"]) p.init_delay_s = n["init_delay_s"].as<double>();
        if (n["load_delay_s"]) p.load_delay_s = n["load_delay_s"].as<double>();
        if (n["ttft_s"]) p.ttft_s = n["ttft_s"].as<double>();
        if (n["per_token_delay_s"]) p.per_token_delay_s = n["per_token_delay_s"].as<double>();
        if (n["tokens_per_response"]) p.tokens_per_response = n["tokens_per_response"].as<uint32_t>();
        if (n["capacity"]) p.capacity = n["capacity"].as<uint32_t>();
        if (n["queue_policy"]) {
            const auto s = n["queue_policy"].as<std::string>();
            if (s == "fifo_queue") p.queue_policy = QueuePolicy::fifo_queue;
            else if (s == "reject_503") p.queue_policy = QueuePolicy::reject_503;
            else throw std::runtime_error("mock profile: unknown queue_policy '" + s + "'");
        }
        if (n["jitter_s"]) p.jitter_s = n["jitter_s"].as<double>();
        if (n["emit_usage"]) p.emit_usage = n["emit_usage"].as<bool>();
        if (n["usage_tokens_override"]) {
            p.usage_tokens_override = n["usage_tokens_override"].as<uint64_t>();
        }
        if (n["canned_responses"]) p.canned_responses_path = n["canned_responses"].as<std::string>();
        if (p.capacity < 1) throw std::runtime_error("mock profile: capacity must be >= 1");
        if (p.init_delay_s < 0 || p.load_delay_s < 0 || p.ttft_s < 0 || p.per_token_delay_s < 0) {
            throw std::runtime_error("mock profile: delays must be >= 0");
        }
        return p;
    }
};

struct MockStats {
    uint64_t max_in_flight = 0;
    uint64_t total_requests = 0;
    uint64_t rejected = 0;
};

namespace mock_detail {

// Ticket-FIFO counting gate: at most `capacity` holders, granted strictly in
// arrival order.
class FifoGate {
public:
    explicit FifoGate(uint32_t capacity) : capacity_(capacity) {}

    void acquire() {
        std::unique_lock<std::mutex> lk(m_);
        const uint64_t ticket = next_++;
        cv_.wait(lk, [&] { return ticket < released_ + capacity_; });
        enter_locked();
    }

    bool try_acquire() {
        std::lock_guard<std::mutex> lk(m_);
        if (next_ - released_ >= capacity_) return false;
        next_++;
        enter_locked();
        return true;
    }

    void release() {
        std::lock_guard<std::mutex> lk(m_);
        released_++;
        active_--;
        cv_.notify_all();
    }

    uint64_t max_active() const {
        std::lock_guard<std::mutex> lk(m_);
        return max_active_;
    }

private:
    void enter_locked() {
        active_++;
        if (active_ > max_active_) max_active_ = active_;
    }

    mutable std::mutex m_;
    std::condition_variable cv_;
    const uint64_t capacity_;
    uint64_t next_ = 0;
    uint64_t released_ = 0;
    uint64_t active_ = 0;
    uint64_t max_active_ = 0;
};

// One detached thread per connection, so a blocked stream never starves the
// accept loop; shutdown waits for active handlers to drain.
class DetachedThreadQueue : public httplib::TaskQueue {
public:
    bool enqueue(std::function<void()> fn) override {
        {
            std::lock_guard<std::mutex> lk(m_);
            active_++;
        }
        try {
            std::thread([this, fn = std::move(fn)] {
                fn();
                std::lock_guard<std::mutex> lk(m_);
                if (--active_ == 0) cv_.notify_all();
            }).detach();
        } catch (...) {
            std::lock_guard<std::mutex> lk(m_);
            active_--;
            return false;
        }
        return true;
    }

    void shutdown() override {
        std::unique_lock<std::mutex> lk(m_);
        cv_.wait_for(lk, std::chrono::seconds(60), [&] { return active_ == 0; });
    }

private:
    std::mutex m_;
    std::condition_variable cv_;
    uint64_t active_ = 0;
};

inline std::vector<std::string> split_keeping_spaces(const std::string& text) {
    // chunks are word + following whitespace, so concatenation reproduces
    // the original text exactly
    std::vector<std::string> out;
    size_t i = 0;
    while (i < text.size()) {
        size_t j = i;
        while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) j++;
        while (j < text.size() && std::isspace(static_cast<unsigned char>(text[j]))) j++;
        out.push_back(text.substr(i, j - i));
        i = j;
    }
    return out;
}

}  // namespace mock_detail

class MockServer {
public:
    explicit MockServer(MockProfile profile) : profile_(std::move(profile)), gate_(profile_.capacity) {
        if (!profile_.canned_responses_path.empty()) load_canned(profile_.canned_responses_path);
        svr_.new_task_queue = [] { return new mock_detail::DetachedThreadQueue(); };
        install_routes();
    }

    ~MockServer() { stop(); }

    // Blocking serve (CLI path): TCP accepts only after init_delay, readiness
    // flips after init_delay + load_delay. Returns false if the port is taken.
    bool serve(const std::string& host, int port) {
        const double t_start = mono_now();
        sleep_for_s(profile_.init_delay_s);
        ready_at_ = t_start + profile_.init_delay_s + profile_.load_delay_s;
        if (!svr_.bind_to_port(host, port)) return false;
        port_ = port;
        bound_ = true;
        return svr_.listen_after_bind();
    }

    // Test path: bind to a free port on the caller's thread (init delay is
    // honored first), then listen in the background.
    int start_async_any_port() {
        const double t_start = mono_now();
        sleep_for_s(profile_.init_delay_s);
        ready_at_ = t_start + profile_.init_delay_s + profile_.load_delay_s;
        const int p = svr_.bind_to_any_port("127.0.0.1");
        if (p <= 0) return -1;
        port_ = p;
        bound_ = true;
        listener_ = std::thread([this] { svr_.listen_after_bind(); });
        while (!svr_.is_running()) sleep_for_s(0.001);
        return p;
    }

    void stop() {
        if (bound_.exchange(false)) {
            svr_.stop();
        }
        if (listener_.joinable()) listener_.join();
    }

    int port() const { return port_; }

    MockStats stats() const {
        MockStats s;
        s.max_in_flight = gate_.max_active();
        s.total_requests = total_.load();
        s.rejected = rejected_.load();
        return s;
    }

    std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }

private:
    void load_canned(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("canned responses file not found: " + path);
        std::string line;
        size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            nlohmann::json rec = nlohmann::json::parse(line, nullptr, false);
            if (rec.is_discarded() || !rec.contains("prompt_substring") ||
                !rec.contains("response")) {
                throw std::runtime_error("canned responses line " + std::to_string(line_no) +
                                         ": expected {prompt_substring, response}");
            }
            canned_.emplace_back(rec["prompt_substring"].get<std::string>(),
                                 rec["response"].get<std::string>());
        }
    }

    bool ready() const { return mono_now() >= ready_at_; }

    void install_routes() {
        svr_.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
            if (ready()) {
                res.set_content("{\"status\":\"ok\"}", "application/json");
            } else {
                res.status = 503;
                res.set_content("{\"status\":\"loading\"}", "application/json");
            }
        });

        svr_.Get("/v1/models", [this](const httplib::Request&, httplib::Response& res) {
            if (!ready()) {
                res.status = 503;
                res.set_content("{\"status\":\"loading\"}", "application/json");
                return;
            }
            res.set_content(R"({"object":"list","data":[{"id":"mock","object":"model"}]})",
                            "application/json");
        });

        svr_.Get("/__stats", [this](const httplib::Request&, httplib::Response& res) {
            const MockStats s = stats();
            nlohmann::json j = {{"max_in_flight", s.max_in_flight},
                                {"total_requests", s.total_requests},
                                {"rejected", s.rejected}};
            res.set_content(j.dump(), "application/json");
        });

        svr_.Post("/v1/chat/completions",
                  [this](const httplib::Request& req, httplib::Response& res) {
                      handle_completion(req, res);
                  });
    }

    void handle_completion(const httplib::Request& req, httplib::Response& res) {
        const uint64_t seq = total_.fetch_add(1);
        if (!ready()) {
            res.status = 503;
            res.set_content(R"({"error":{"message":"model loading","type":"loading"}})",
                            "application/json");
            return;
        }

        nlohmann::json body = nlohmann::json::parse(req.body, nullptr, false);
        if (body.is_discarded()) {
            res.status = 400;
            res.set_content(R"({"error":{"message":"invalid JSON body","type":"bad_request"}})",
                            "application/json");
            return;
        }
        std::string prompt;
        if (body.contains("messages") && body["messages"].is_array()) {
            for (const auto& m : body["messages"]) {
                if (m.contains("content") && m["content"].is_string()) {
                    prompt = m["content"].get<std::string>();  // last message wins
                }
            }
        }
        const std::string model =
            body.contains("model") && body["model"].is_string() ? body["model"].get<std::string>()
                                                                : "mock";

        // pick the response text: canned match, else "tok " x N
        std::vector<std::string> chunks;
        for (const auto& [needle, response] : canned_) {
            if (prompt.find(needle) != std::string::npos) {
                chunks = mock_detail::split_keeping_spaces(response);
                break;
            }
        }
        if (chunks.empty()) {
            chunks.assign(profile_.tokens_per_response, "tok ");
        }
        // honor the client's max_tokens cap
        if (body.contains("max_tokens") && body["max_tokens"].is_number_unsigned()) {
            const size_t cap = body["max_tokens"].get<size_t>();
            if (chunks.size() > cap) chunks.resize(cap);
        }

        if (profile_.queue_policy == QueuePolicy::reject_503) {
            if (!gate_.try_acquire()) {
                rejected_.fetch_add(1);
                res.status = 503;
                res.set_content(
                    R"({"error":{"message":"server at capacity","type":"capacity_exceeded"}})",
                    "application/json");
                return;
            }
        } else {
            gate_.acquire();
        }

        // absolute event schedule, built while holding the slot
        Rng rng(0x6d6f636bULL ^ (seq * 0x9e3779b97f4a7c15ULL));
        auto jitter = [&]() {
            return profile_.jitter_s > 0 ? (rng.uniform01() * 2.0 - 1.0) * profile_.jitter_s : 0.0;
        };
        const double t0 = mono_now();
        std::vector<double> at(chunks.size() + 1);
        double t = t0 + profile_.ttft_s + jitter();
        for (size_t i = 0; i < chunks.size(); ++i) {
            at[i] = t;
            t += profile_.per_token_delay_s + jitter();
        }
        at[chunks.size()] = t;  // usage + [DONE]

        const uint64_t usage_tokens =
            profile_.usage_tokens_override ? profile_.usage_tokens_override : chunks.size();
        auto payload = [model, seq](nlohmann::json delta, bool stop) {
            nlohmann::json j = {{"id", "chatcmpl-mock-" + std::to_string(seq)},
                                {"object", "chat.completion.chunk"},
                                {"model", model},
                                {"choices", nlohmann::json::array(
                                                {{{"index", 0},
                                                  {"delta", std::move(delta)},
                                                  {"finish_reason",
                                                   stop ? nlohmann::json("stop")
                                                        : nlohmann::json(nullptr)}}})}};
            return j;
        };

        struct StreamState {
            std::vector<std::string> chunks;
            std::vector<double> at;
            nlohmann::json usage;
            bool emit_usage;
            std::function<nlohmann::json(nlohmann::json, bool)> payload;
            bool started = false;
        };
        auto state = std::make_shared<StreamState>();
        state->chunks = std::move(chunks);
        state->at = std::move(at);
        state->emit_usage = profile_.emit_usage;
        state->payload = payload;
        const uint64_t prompt_words = mock_detail::split_keeping_spaces(prompt).size();
        state->usage = {{"prompt_tokens", prompt_words},
                        {"completion_tokens", usage_tokens},
                        {"total_tokens", prompt_words + usage_tokens}};

        res.set_chunked_content_provider(
            "text/event-stream",
            [state](size_t /*offset*/, httplib::DataSink& sink) {
                if (state->started) return false;
                state->started = true;
                for (size_t i = 0; i < state->chunks.size(); ++i) {
                    sleep_until_mono(state->at[i]);
                    nlohmann::json delta = {{"content", state->chunks[i]}};
                    if (i == 0) delta["role"] = "assistant";
                    const std::string frame = SseParser::frame(
                        state->payload(std::move(delta), i + 1 == state->chunks.size()).dump());
                    if (!sink.write(frame.data(), frame.size())) return false;
                }
                sleep_until_mono(state->at[state->chunks.size()]);
                if (state->emit_usage) {
                    nlohmann::json j = {{"object", "chat.completion.chunk"},
                                        {"choices", nlohmann::json::array()},
                                        {"usage", state->usage}};
                    const std::string frame = SseParser::frame(j.dump());
                    if (!sink.write(frame.data(), frame.size())) return false;
                }
                const std::string done = SseParser::frame(SseParser::done_payload());
                if (!sink.write(done.data(), done.size())) return false;
                sink.done();
                return true;
            },
            [this](bool) { gate_.release(); });
    }

    MockProfile profile_;
    httplib::Server svr_;
    std::thread listener_;
    std::atomic<bool> bound_{false};
    int port_ = 0;
    double ready_at_ = 0;
    mock_detail::FifoGate gate_;
    std::atomic<uint64_t> total_{0};
    std::atomic<uint64_t> rejected_{0};
    std::vector<std::pair<std::string, std::string>> canned_;
};

}  // namespace llmbench
