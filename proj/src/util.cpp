#include "domeval/util.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "domeval/error.hpp"

namespace domeval {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::DocumentEmpty: return "DocumentEmpty";
        case ErrorCode::InvalidChunkParams: return "InvalidChunkParams";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::EndpointUnreachable: return "EndpointUnreachable";
        case ErrorCode::AuthFailure: return "AuthFailure";
        case ErrorCode::ResponseTruncated: return "ResponseTruncated";
        case ErrorCode::RetriesExhausted: return "RetriesExhausted";
        case ErrorCode::GranularityMismatch: return "GranularityMismatch";
        case ErrorCode::GeneratorRefused: return "GeneratorRefused";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::EmptyStore: return "EmptyStore";
        case ErrorCode::TemplateMissingPlaceholder: return "TemplateMissingPlaceholder";
        case ErrorCode::EmptyCandidate: return "EmptyCandidate";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::EmptyText: return "EmptyText";
        case ErrorCode::UnknownLabel: return "UnknownLabel";
        case ErrorCode::UnknownItem: return "UnknownItem";
        case ErrorCode::MisalignedVectors: return "MisalignedVectors";
        case ErrorCode::TooFewItems: return "TooFewItems";
        case ErrorCode::MissingCategory: return "MissingCategory";
        case ErrorCode::MissingResponse: return "MissingResponse";
        case ErrorCode::SessionClosed: return "SessionClosed";
        case ErrorCode::SessionIncomplete: return "SessionIncomplete";
        case ErrorCode::UnknownSession: return "UnknownSession";
        case ErrorCode::UnknownKey: return "UnknownKey";
        case ErrorCode::UnknownCategory: return "UnknownCategory";
        case ErrorCode::UnknownEndpoint: return "UnknownEndpoint";
        case ErrorCode::Io: return "Io";
        case ErrorCode::Parse: return "Parse";
    }
    return "Unknown";
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string to_lower_ascii(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

static bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && is_space(s[b])) ++b;
    while (e > b && is_space(s[e - 1])) --e;
    return std::string(s.substr(b, e - b));
}

std::string rtrim(std::string_view s) {
    std::size_t e = s.size();
    while (e > 0 && is_space(s[e - 1])) --e;
    return std::string(s.substr(0, e));
}

bool is_blank(std::string_view s) {
    for (char c : s)
        if (!is_space(c)) return false;
    return true;
}

std::string normalize_whitespace_lower(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (char c : s) {
        if (is_space(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return out;
}

std::vector<std::string> split_lines(std::string_view text) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto nl = text.find('\n', start);
        if (nl == std::string_view::npos) {
            if (start < text.size()) lines.emplace_back(text.substr(start));
            break;
        }
        lines.emplace_back(text.substr(start, nl - start));
        start = nl + 1;
    }
    return lines;
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
    if (from.empty()) return s;
    std::size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
    return s;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw Error(ErrorCode::Io, "short write " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string fill_template(std::string_view tmpl,
                          std::initializer_list<std::pair<std::string_view, std::string_view>> vars) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{') {
            bool hit = false;
            for (const auto& [name, value] : vars) {
                if (tmpl.substr(i + 1, name.size()) == name && i + 1 + name.size() < tmpl.size() &&
                    tmpl[i + 1 + name.size()] == '}') {
                    out.append(value);
                    i += name.size() + 2;
                    hit = true;
                    break;
                }
            }
            if (hit) continue;
        }
        out.push_back(tmpl[i++]);
    }
    return out;
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false, any = false;
    auto end_row = [&] {
        row.push_back(std::move(field));
        field.clear();
        if (!(row.size() == 1 && row[0].empty())) rows.push_back(std::move(row));
        row.clear();
        any = false;
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        any = true;
        if (c == '"') quoted = true;
        else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
        } else if (c == '\n') end_row();
        else if (c != '\r') field.push_back(c);
    }
    if (quoted) throw Error(ErrorCode::Parse, "unterminated quoted CSV field");
    if (any || !field.empty() || !row.empty()) end_row();
    return rows;
}

std::string csv_field(std::string_view value) {
    if (value.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(value);
    std::string out = "\"";
    for (char c : value) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

std::string extract_json(std::string_view text, char open) {
    const char close = open == '{' ? '}' : ']';
    for (std::size_t start = text.find(open); start != std::string_view::npos;
         start = text.find(open, start + 1)) {
        int depth = 0;
        bool in_string = false, escaped = false;
        for (std::size_t i = start; i < text.size(); ++i) {
            char c = text[i];
            if (in_string) {
                if (escaped) escaped = false;
                else if (c == '\\') escaped = true;
                else if (c == '"') in_string = false;
                continue;
            }
            if (c == '"') in_string = true;
            else if (c == '{' || c == '[') ++depth;
            else if (c == '}' || c == ']') {
                if (--depth == 0) {
                    if (c != close) break;
                    return std::string(text.substr(start, i - start + 1));
                }
            }
        }
    }
    return {};
}

}  // namespace domeval
