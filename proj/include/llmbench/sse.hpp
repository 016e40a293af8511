#pragma once

// Incremental server-sent-events framing. Events are "data: <payload>"
// blocks separated by a blank line; the terminator payload is "[DONE]".

#include <cstddef>
#include <functional>
#include <string>
#include <string_view>

namespace llmbench {

class SseParser {
public:
    // Feed raw bytes; cb(payload) fires once per completed event.
    // Returns false if a completed block contained no data line.
    template <typename F>
    bool feed(const char* data, size_t len, F&& cb) {
        buf_.append(data, len);
        bool well_formed = true;
        size_t pos;
        while ((pos = buf_.find("\n\n")) != std::string::npos) {
            std::string_view block(buf_.data(), pos);
            std::string payload;
            bool saw_data = false;
            size_t line_start = 0;
            while (line_start <= block.size()) {
                size_t line_end = block.find('\n', line_start);
                if (line_end == std::string_view::npos) line_end = block.size();
                std::string_view line = block.substr(line_start, line_end - line_start);
                if (line.rfind("data:", 0) == 0) {
                    std::string_view v = line.substr(5);
                    if (!v.empty() && v.front() == ' ') v.remove_prefix(1);
                    if (saw_data) payload.push_back('\n');
                    payload.append(v);
                    saw_data = true;
                }
                if (line_end == block.size()) break;
                line_start = line_end + 1;
            }
            buf_.erase(0, pos + 2);
            if (saw_data) {
                cb(payload);
            } else if (!block.empty()) {
                well_formed = false;  // a block with no data line
            }
        }
        return well_formed;
    }

    bool has_partial() const { return !buf_.empty(); }

    static const char* done_payload() { return "[DONE]"; }

    static std::string frame(const std::string& payload) {
        return "data: " + payload + "\n\n";
    }

private:
    std::string buf_;
};

}  // namespace llmbench
