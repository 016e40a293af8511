#pragma once

// Backend abstraction: launch or attach to an OpenAI-compatible endpoint,
// probe readiness (timing the cold-start components on the shared monotonic
// clock), and execute streaming chat completions with timing hooks.
//
// Timing boundaries, fixed here:
//   dispatch_time     stamped immediately before the request is sent
//                     (connection setup + body write follow the stamp)
//   first_token_time  receipt of the first stream chunk whose delta carries
//                     non-empty content
//   completion_time   receipt of the "data: [DONE]" terminator

#include <fcntl.h>
#include <netdb.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/stat.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmbench/clock.hpp"
#include "llmbench/http.hpp"
#include "llmbench/config.hpp"
#include "llmbench/sse.hpp"

namespace llmbench {

enum class RequestStatus { ok, http_error, stream_error, empty_output };

inline const char* to_string(RequestStatus s) {
    switch (s) {
        case RequestStatus::ok: return "ok";
        case RequestStatus::http_error: return "http_error";
        case RequestStatus::stream_error: return "stream_error";
        case RequestStatus::empty_output: return "empty_output";
    }
    return "?";
}

inline std::optional<RequestStatus> request_status_from_string(const std::string& s) {
    if (s == "ok") return RequestStatus::ok;
    if (s == "http_error") return RequestStatus::http_error;
    if (s == "stream_error") return RequestStatus::stream_error;
    if (s == "empty_output") return RequestStatus::empty_output;
    return std::nullopt;
}

struct RequestRecord {
    uint64_t seq = 0;
    std::string instance_id;
    double arrival_time = 0;      // planned arrival (server) or == dispatch_time
    double dispatch_time = 0;
    double first_token_time = 0;
    double completion_time = 0;
    std::optional<uint64_t> prompt_tokens;
    uint64_t completion_tokens = 0;  // N_t
    uint64_t sentence_count = 0;     // N_s
    std::string output_text;
    RequestStatus status = RequestStatus::ok;
    std::string error;
    std::string token_count_source;  // "usage" | "chunks"
};

struct ColdStartReport {
    double startup_s = 0;     // process launch -> TCP accept
    double load_s = 0;        // TCP accept -> readiness probe success
    double probe_ttft_s = 0;  // TTFT of one canary request
    double cold_s = 0;        // exact component sum
    bool attach_mode = false;
};

struct BackendError : std::runtime_error {
    ColdStartReport partial;
    explicit BackendError(const std::string& msg, ColdStartReport p = {})
        : std::runtime_error(msg), partial(p) {}
};

// Number of maximal segments terminated by '.', '!' or '?'; a run of
// terminators counts once, and a trailing unterminated segment counts
// if it has any visible content.
inline uint64_t count_sentences(const std::string& text) {
    uint64_t count = 0;
    bool in_terminator_run = false;
    bool pending_content = false;
    for (char c : text) {
        if (c == '.' || c == '!' || c == '?') {
            if (!in_terminator_run) {
                count++;
                in_terminator_run = true;
                pending_content = false;
            }
        } else {
            in_terminator_run = false;
            if (!std::isspace(static_cast<unsigned char>(c))) pending_content = true;
        }
    }
    if (pending_content) count++;
    return count;
}

struct Url {
    std::string scheme = "http";
    std::string host = "127.0.0.1";
    int port = 80;
    std::string base_path;  // no trailing slash

    static Url parse(const std::string& url) {
        Url u;
        std::string rest = url;
        if (rest.rfind("http://", 0) == 0) {
            u.scheme = "http";
            rest = rest.substr(7);
        } else if (rest.rfind("https://", 0) == 0) {
            u.scheme = "https";
            rest = rest.substr(8);
        } else {
            throw ConfigError("endpoint_url must start with http:// or https://");
        }
        const size_t slash = rest.find('/');
        std::string hostport = rest.substr(0, slash);
        if (slash != std::string::npos) {
            u.base_path = rest.substr(slash);
            while (!u.base_path.empty() && u.base_path.back() == '/') u.base_path.pop_back();
        }
        const size_t colon = hostport.rfind(':');
        if (colon != std::string::npos) {
            u.host = hostport.substr(0, colon);
            u.port = std::atoi(hostport.c_str() + colon + 1);
        } else {
            u.host = hostport;
            u.port = (u.scheme == "https") ? 443 : 80;
        }
        if (u.host.empty() || u.port <= 0) throw ConfigError("endpoint_url has no valid host:port");
        return u;
    }
};

struct RequestParams {
    std::string model = "unknown";
    uint32_t max_tokens = 512;
    double temperature = 0.0;
    double timeout_s = 300.0;
};

// Streaming chat-completion client. The handle is shared across request
// executors; every call opens its own connection, so concurrent use needs
// no locking.
class ChatClient {
public:
    ChatClient(const std::string& endpoint_url, RequestParams params)
        : url_(Url::parse(endpoint_url)), params_(std::move(params)) {
        if (const char* key = std::getenv("BENCH_API_KEY"); key && *key) {
            api_key_ = key;
        }
    }

    const Url& url() const { return url_; }
    const RequestParams& params() const { return params_; }

    RequestRecord stream_completion(const std::string& prompt) const {
        return stream_completion(prompt, params_.max_tokens);
    }

    RequestRecord stream_completion(const std::string& prompt, uint32_t max_tokens) const {
        RequestRecord rec;

        nlohmann::json body = {
            {"model", params_.model},
            {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
            {"stream", true},
            {"temperature", params_.temperature},
            {"max_tokens", max_tokens},
            {"stream_options", {{"include_usage", true}}},
        };

        httplib::Client cli(url_.host, url_.port);
        cli.set_connection_timeout(std::chrono::duration<double>(
            std::min(params_.timeout_s, 30.0)));
        cli.set_read_timeout(std::chrono::duration<double>(params_.timeout_s));
        cli.set_write_timeout(std::chrono::duration<double>(params_.timeout_s));

        httplib::Request req;
        req.method = "POST";
        req.path = url_.base_path + "/v1/chat/completions";
        req.set_header("Content-Type", "application/json");
        req.set_header("Accept", "text/event-stream");
        if (!api_key_.empty()) req.set_header("Authorization", "Bearer " + api_key_);
        req.body = body.dump();

        int status = 0;
        std::string error_body;
        SseParser parser;
        bool done_seen = false;
        bool malformed = false;
        std::optional<uint64_t> usage_completion, usage_prompt;
        uint64_t content_chunks = 0;

        req.response_handler = [&](const httplib::Response& response) {
            status = response.status;
            return true;
        };
        req.content_receiver = [&](const char* data, size_t len, uint64_t, uint64_t) {
            const double t_recv = mono_now();
            if (status != 200) {
                error_body.append(data, len);
                return true;
            }
            const bool ok = parser.feed(data, len, [&](const std::string& payload) {
                if (payload == SseParser::done_payload()) {
                    done_seen = true;
                    rec.completion_time = t_recv;
                    return;
                }
                nlohmann::json event = nlohmann::json::parse(payload, nullptr, false);
                if (event.is_discarded()) {
                    malformed = true;
                    return;
                }
                if (event.contains("usage") && event["usage"].is_object()) {
                    const auto& usage = event["usage"];
                    if (usage.contains("completion_tokens")) {
                        usage_completion = usage["completion_tokens"].get<uint64_t>();
                    }
                    if (usage.contains("prompt_tokens")) {
                        usage_prompt = usage["prompt_tokens"].get<uint64_t>();
                    }
                }
                if (event.contains("choices") && event["choices"].is_array() &&
                    !event["choices"].empty()) {
                    const auto& delta = event["choices"][0]["delta"];
                    if (delta.is_object() && delta.contains("content") &&
                        delta["content"].is_string()) {
                        const std::string piece = delta["content"].get<std::string>();
                        if (!piece.empty()) {
                            if (content_chunks == 0) rec.first_token_time = t_recv;
                            content_chunks++;
                            rec.output_text += piece;
                        }
                    }
                }
            });
            if (!ok) malformed = true;
            return true;
        };

        rec.dispatch_time = mono_now();
        httplib::Result result = cli.send(req);
        const double t_end = mono_now();

        rec.arrival_time = rec.dispatch_time;
        if (rec.completion_time == 0) rec.completion_time = t_end;

        if (!result || status == 0) {
            rec.status = RequestStatus::http_error;
            rec.error = "transport error: " + httplib::to_string(result.error());
            return rec;
        }
        if (status != 200) {
            rec.status = RequestStatus::http_error;
            rec.error = "HTTP " + std::to_string(status) + ": " + error_body;
            return rec;
        }
        if (malformed || parser.has_partial() || !done_seen) {
            rec.status = RequestStatus::stream_error;
            rec.error = malformed ? "malformed stream event"
                                  : (!done_seen ? "stream ended without [DONE]"
                                                : "trailing partial event");
            return rec;  // partial text retained
        }
        if (content_chunks == 0) {
            rec.status = RequestStatus::empty_output;
            rec.error = "zero content chunks";
            return rec;
        }

        if (usage_completion) {
            rec.completion_tokens = *usage_completion;
            rec.token_count_source = "usage";
        } else {
            rec.completion_tokens = content_chunks;
            rec.token_count_source = "chunks";
        }
        rec.prompt_tokens = usage_prompt;
        rec.sentence_count = count_sentences(rec.output_text);
        rec.status = RequestStatus::ok;
        return rec;
    }

    // GET the readiness path; 200 means ready.
    bool probe_ready(const std::string& ready_path) const {
        httplib::Client cli(url_.host, url_.port);
        cli.set_connection_timeout(std::chrono::seconds(2));
        cli.set_read_timeout(std::chrono::seconds(5));
        auto res = cli.Get(url_.base_path + ready_path);
        if (res && res->status == 200) return true;
        // fallback probe for engines without a /health route
        if (res && res->status == 404 && ready_path != "/v1/models") {
            auto res2 = cli.Get(url_.base_path + "/v1/models");
            return res2 && res2->status == 200;
        }
        return false;
    }

    bool tcp_connectable() const {
        struct addrinfo hints = {};
        hints.ai_family = AF_UNSPEC;
        hints.ai_socktype = SOCK_STREAM;
        struct addrinfo* res = nullptr;
        const std::string port_str = std::to_string(url_.port);
        if (getaddrinfo(url_.host.c_str(), port_str.c_str(), &hints, &res) != 0) return false;
        bool ok = false;
        for (auto* p = res; p && !ok; p = p->ai_next) {
            const int fd = ::socket(p->ai_family, p->ai_socktype, p->ai_protocol);
            if (fd < 0) continue;
            if (::connect(fd, p->ai_addr, p->ai_addrlen) == 0) ok = true;
            ::close(fd);
        }
        freeaddrinfo(res);
        return ok;
    }

private:
    Url url_;
    RequestParams params_;
    std::string api_key_;
};

// A launched backend process (own process group, stdout+stderr captured).
class ChildProcess {
public:
    ChildProcess(const std::vector<std::string>& command,
                 const std::map<std::string, std::string>& env, const std::string& log_path)
        : log_path_(log_path) {
        pid_ = ::fork();
        if (pid_ < 0) throw BackendError("fork failed");
        if (pid_ == 0) {
            ::setpgid(0, 0);
            const int fd = ::open(log_path.c_str(), O_CREAT | O_WRONLY | O_TRUNC, 0644);
            if (fd >= 0) {
                ::dup2(fd, STDOUT_FILENO);
                ::dup2(fd, STDERR_FILENO);
                ::close(fd);
            }
            for (const auto& [k, v] : env) ::setenv(k.c_str(), v.c_str(), 1);
            std::vector<char*> argv;
            argv.reserve(command.size() + 1);
            for (const auto& arg : command) argv.push_back(const_cast<char*>(arg.c_str()));
            argv.push_back(nullptr);
            ::execvp(argv[0], argv.data());
            ::fprintf(stderr, "exec failed: %s\n", argv[0]);
            ::_exit(127);
        }
        ::setpgid(pid_, pid_);  // also from the parent: avoids a startup race
    }

    ChildProcess(const ChildProcess&) = delete;
    ChildProcess& operator=(const ChildProcess&) = delete;
    ~ChildProcess() { terminate(); }

    pid_t pid() const { return pid_; }

    bool exited() {
        if (pid_ <= 0) return true;
        int wstatus = 0;
        const pid_t r = ::waitpid(pid_, &wstatus, WNOHANG);
        if (r == pid_) {
            pid_ = -1;
            return true;
        }
        return false;
    }

    void terminate() {
        if (pid_ <= 0) return;
        ::kill(-pid_, SIGTERM);
        for (int i = 0; i < 50; ++i) {
            if (exited()) return;
            sleep_for_s(0.1);
        }
        if (pid_ > 0) {
            ::kill(-pid_, SIGKILL);
            ::waitpid(pid_, nullptr, 0);
            pid_ = -1;
        }
    }

    std::string log_tail(size_t max_bytes = 2048) const {
        std::ifstream in(log_path_, std::ios::binary);
        if (!in) return "";
        in.seekg(0, std::ios::end);
        const auto size = static_cast<size_t>(in.tellg());
        const size_t take = std::min(size, max_bytes);
        in.seekg(static_cast<std::streamoff>(size - take));
        std::string tail(take, '\0');
        in.read(tail.data(), static_cast<std::streamsize>(take));
        return tail;
    }

private:
    pid_t pid_ = -1;
    std::string log_path_;
};

struct LaunchResult {
    ColdStartReport cold_start;
    std::unique_ptr<ChildProcess> process;  // null in attach mode
};

// Launch the backend command and measure the cold-start decomposition:
// T_startup = launch -> TCP accept, T_load = TCP accept -> readiness 200,
// probe_ttft = TTFT of one canary request. All on the shared clock.
inline LaunchResult launch_and_probe(const LaunchSpec& launch, const ChatClient& client,
                                     const std::string& log_path) {
    LaunchResult out;
    ColdStartReport& cs = out.cold_start;

    const double t0 = mono_now();
    out.process = std::make_unique<ChildProcess>(launch.command, launch.env, log_path);

    auto fail = [&](const std::string& why) -> BackendError {
        std::string tail = out.process ? out.process->log_tail() : "";
        if (out.process) out.process->terminate();
        std::string msg = why;
        if (!tail.empty()) msg += "\n--- backend output tail ---\n" + tail;
        return BackendError(msg, cs);
    };

    // phase 1: wait for the TCP port to accept
    for (;;) {
        if (client.tcp_connectable()) break;
        if (out.process->exited()) throw fail("backend process exited before accepting connections");
        if (mono_now() - t0 > launch.ready_timeout_s) {
            throw fail("ready_timeout exceeded waiting for TCP accept (" +
                       std::to_string(launch.ready_timeout_s) + " s)");
        }
        sleep_for_s(0.02);
    }
    const double t_accept = mono_now();
    cs.startup_s = t_accept - t0;

    // phase 2: readiness probe
    for (;;) {
        if (client.probe_ready(launch.ready_path)) break;
        if (out.process->exited()) throw fail("backend process exited before becoming ready");
        if (mono_now() - t0 > launch.ready_timeout_s) {
            throw fail("ready_timeout exceeded waiting for readiness probe");
        }
        sleep_for_s(0.05);
    }
    cs.load_s = mono_now() - t_accept;

    // phase 3: canary request
    RequestRecord canary = client.stream_completion("ping", 8);
    if (canary.status != RequestStatus::ok) {
        throw fail("canary request failed: " + canary.error);
    }
    cs.probe_ttft_s = canary.first_token_time - canary.dispatch_time;
    cs.cold_s = cs.startup_s + cs.load_s + cs.probe_ttft_s;
    return out;
}

// Attach mode: the endpoint is already running. Startup and load are zero by
// definition; only the canary TTFT is measured.
inline ColdStartReport attach_and_probe(const ChatClient& client,
                                        const std::string& ready_path = "/health",
                                        double timeout_s = 30.0) {
    const double t0 = mono_now();
    while (!client.probe_ready(ready_path)) {
        if (mono_now() - t0 > timeout_s) {
            throw BackendError("endpoint not ready within " + std::to_string(timeout_s) +
                               " s (attach mode)");
        }
        sleep_for_s(0.05);
    }
    RequestRecord canary = client.stream_completion("ping", 8);
    if (canary.status != RequestStatus::ok) {
        throw BackendError("canary request failed: " + canary.error);
    }
    ColdStartReport cs;
    cs.attach_mode = true;
    cs.probe_ttft_s = canary.first_token_time - canary.dispatch_time;
    cs.cold_s = cs.startup_s + cs.load_s + cs.probe_ttft_s;
    return cs;
}

}  // namespace llmbench
