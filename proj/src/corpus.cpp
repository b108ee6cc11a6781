#include "domeval/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "domeval/error.hpp"
#include "domeval/util.hpp"

namespace domeval::corpus {

using json = nlohmann::ordered_json;

namespace {

struct Heading {
    int level = 0;
    std::string text;
    std::size_t line_begin = 0;
};

bool is_fence(std::string_view line) {
    std::size_t i = 0;
    while (i < line.size() && i < 3 && line[i] == ' ') ++i;
    auto rest = line.substr(i);
    return rest.starts_with("```") || rest.starts_with("~~~");
}

// ATX headings only; setext headings are rare in converted documents.
bool parse_heading(std::string_view line, Heading& out) {
    std::size_t i = 0;
    while (i < line.size() && i < 3 && line[i] == ' ') ++i;
    std::size_t hashes = 0;
    while (i + hashes < line.size() && line[i + hashes] == '#') ++hashes;
    if (hashes == 0 || hashes > 6) return false;
    std::size_t j = i + hashes;
    if (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') return false;
    std::string text = trim(line.substr(j));
    while (!text.empty() && text.back() == '#') text.pop_back();
    out.level = static_cast<int>(hashes);
    out.text = trim(text);
    return true;
}

std::vector<Heading> scan_headings(std::string_view text) {
    std::vector<Heading> out;
    bool in_fence = false;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        auto end = nl == std::string_view::npos ? text.size() : nl;
        auto line = text.substr(pos, end - pos);
        if (is_fence(line)) {
            in_fence = !in_fence;
        } else if (!in_fence) {
            Heading h;
            if (parse_heading(line, h)) {
                h.line_begin = pos;
                out.push_back(std::move(h));
            }
        }
        if (nl == std::string_view::npos) break;
        pos = nl + 1;
    }
    return out;
}

// Strips emphasis markers, leading section numbers and a trailing colon.
std::string normalize_heading(std::string_view heading) {
    std::string s;
    for (char c : heading)
        if (c != '*' && c != '_') s.push_back(c);
    s = trim(s);
    std::size_t i = 0;
    while (i < s.size() && (std::isdigit(static_cast<unsigned char>(s[i])) || s[i] == '.')) ++i;
    if (i > 0 && i < s.size() && s[i] == ' ') s = s.substr(i);
    s = normalize_whitespace_lower(s);
    while (!s.empty() && s.back() == ':') s.pop_back();
    return s;
}

bool glob_match(std::string_view pattern, std::string_view text) {
    std::size_t p = 0, t = 0, star = std::string_view::npos, mark = 0;
    while (t < text.size()) {
        if (p < pattern.size() && pattern[p] == '*') {
            star = p++;
            mark = t;
        } else if (p < pattern.size() && pattern[p] == text[t]) {
            ++p;
            ++t;
        } else if (star != std::string_view::npos) {
            p = star + 1;
            t = ++mark;
        } else {
            return false;
        }
    }
    while (p < pattern.size() && pattern[p] == '*') ++p;
    return p == pattern.size();
}

struct Range {
    std::size_t begin, end;
};

// Additive token counts hold for any cut that does not split a word run
// unevenly, so packing can sum unit counts instead of recounting.
void refine_units(std::string_view text, Range r, std::size_t max_tokens, int level,
                  const TokenEstimator& est, std::vector<Range>& out) {
    auto count = [&](Range x) { return est.count(text.substr(x.begin, x.end - x.begin)); };
    if (count(r) <= max_tokens) {
        out.push_back(r);
        return;
    }
    std::vector<Range> parts;
    if (level == 0) {
        // Paragraphs: cut after each blank-line run.
        std::size_t start = r.begin;
        std::size_t i = r.begin;
        while (i < r.end) {
            auto nl = text.find("\n\n", i);
            if (nl == std::string_view::npos || nl >= r.end) break;
            std::size_t j = nl;
            while (j < r.end && (text[j] == '\n' || text[j] == ' ' || text[j] == '\t' ||
                                 text[j] == '\r'))
                ++j;
            if (j < r.end) {
                parts.push_back({start, j});
                start = j;
            }
            i = j;
        }
        parts.push_back({start, r.end});
    } else if (level == 1) {
        // Sentences: cut after terminal punctuation plus following whitespace.
        std::size_t start = r.begin;
        for (std::size_t i = r.begin; i < r.end; ++i) {
            char c = text[i];
            if ((c == '.' || c == '!' || c == '?') && i + 1 < r.end &&
                std::isspace(static_cast<unsigned char>(text[i + 1]))) {
                std::size_t j = i + 1;
                while (j < r.end && std::isspace(static_cast<unsigned char>(text[j]))) ++j;
                if (j < r.end) {
                    parts.push_back({start, j});
                    start = j;
                }
                i = j - 1;
            }
        }
        parts.push_back({start, r.end});
    } else {
        // Hard cut at token starts.
        auto spans = est.spans(text.substr(r.begin, r.end - r.begin));
        std::size_t start = r.begin;
        for (std::size_t k = max_tokens; k < spans.size(); k += max_tokens) {
            std::size_t cut = r.begin + spans[k].begin;
            parts.push_back({start, cut});
            start = cut;
        }
        parts.push_back({start, r.end});
        out.insert(out.end(), parts.begin(), parts.end());
        return;
    }
    if (parts.size() == 1) {
        refine_units(text, r, max_tokens, level + 1, est, out);
        return;
    }
    for (auto p : parts) refine_units(text, p, max_tokens, level + 1, est, out);
}

std::vector<Range> pack_units(std::string_view text, const std::vector<Range>& units,
                              std::size_t max_tokens, const TokenEstimator& est) {
    std::vector<Range> out;
    Range cur{units.front().begin, units.front().begin};
    std::size_t cur_tokens = 0;
    for (auto u : units) {
        std::size_t t = est.count(text.substr(u.begin, u.end - u.begin));
        if (cur.end > cur.begin && cur_tokens + t > max_tokens) {
            out.push_back(cur);
            cur = {u.begin, u.begin};
            cur_tokens = 0;
        }
        cur.end = u.end;
        cur_tokens += t;
    }
    if (cur.end > cur.begin) out.push_back(cur);
    return out;
}

std::string chunk_id(const std::string& doc_id, ChunkStrategy s, std::size_t k) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%05zu", k);
    return doc_id + (s == ChunkStrategy::recursive ? "/rec/" : "/md/") + buf;
}

}  // namespace

std::string Chapter::ref() const { return doc_id + "#" + std::to_string(index); }

std::string_view to_string(ChunkStrategy s) {
    return s == ChunkStrategy::recursive ? "recursive" : "markdown_header";
}

ChunkStrategy parse_chunk_strategy(std::string_view s) {
    if (s == "recursive") return ChunkStrategy::recursive;
    if (s == "markdown_header" || s == "markdownheader") return ChunkStrategy::markdown_header;
    throw Error(ErrorCode::InvalidArgument, "unknown chunk strategy '" + std::string(s) + "'");
}

BoilerplatePatterns BoilerplatePatterns::defaults() {
    return {{"references", "bibliography", "acknowledg*", "table of contents", "contents",
             "author*", "conflict of interest"}};
}

bool BoilerplatePatterns::matches(std::string_view heading_text) const {
    auto h = normalize_heading(heading_text);
    for (const auto& p : patterns)
        if (glob_match(normalize_whitespace_lower(p), h)) return true;
    return false;
}

std::string clean_document(std::string_view raw, const BoilerplatePatterns& patterns) {
    auto headings = scan_headings(raw);
    std::vector<Range> removed;
    for (std::size_t i = 0; i < headings.size(); ++i) {
        const auto& h = headings[i];
        if (h.level > 2 || !patterns.matches(h.text)) continue;
        std::size_t end = raw.size();
        for (std::size_t j = i + 1; j < headings.size(); ++j) {
            if (headings[j].level <= h.level) {
                end = headings[j].line_begin;
                break;
            }
        }
        removed.push_back({h.line_begin, end});
    }
    std::string out;
    out.reserve(raw.size());
    std::size_t pos = 0;
    for (auto r : removed) {
        if (r.begin < pos) {
            pos = std::max(pos, r.end);
            continue;
        }
        out.append(raw.substr(pos, r.begin - pos));
        pos = r.end;
    }
    if (pos < raw.size()) out.append(raw.substr(pos));
    return out;
}

std::size_t estimate_tokens(std::string_view text, const TokenEstimator& estimator) {
    return estimator.count(text);
}

ChapterSplit split_chapters(const CorpusDocument& doc, std::size_t max_chapters,
                            std::size_t max_tokens, const TokenEstimator& est) {
    if (is_blank(doc.cleaned_text))
        throw Error(ErrorCode::DocumentEmpty, "document '" + doc.id + "' has no content");
    if (max_tokens == 0) throw Error(ErrorCode::InvalidArgument, "max_tokens must be positive");
    const std::string text = rtrim(doc.cleaned_text);
    std::string_view view(text);

    auto headings = scan_headings(view);
    int top = 7;
    for (const auto& h : headings) top = std::min(top, h.level);

    struct Segment {
        Range range;
        std::string heading;
    };
    std::vector<Segment> segments;
    std::size_t start = 0;
    std::string heading;
    for (const auto& h : headings) {
        if (h.level != top) continue;
        if (h.line_begin > start) {
            auto body = view.substr(start, h.line_begin - start);
            if (!segments.empty() || !is_blank(body)) {
                segments.push_back({{start, h.line_begin}, heading});
                start = h.line_begin;
            }
            // A blank preamble stays attached to the first chapter.
        }
        heading = h.text;
    }
    segments.push_back({{start, view.size()}, heading});

    ChapterSplit result;
    std::vector<Segment> pieces;
    for (const auto& seg : segments) {
        std::vector<Range> units;
        refine_units(view, seg.range, max_tokens, 0, est, units);
        for (auto r : pack_units(view, units, max_tokens, est)) pieces.push_back({r, seg.heading});
    }
    for (const auto& p : pieces) {
        if (result.chapters.size() >= max_chapters) {
            result.dropped.push_back(p.heading);
            continue;
        }
        Chapter c;
        c.doc_id = doc.id;
        c.index = result.chapters.size();
        c.heading = p.heading;
        c.text = std::string(view.substr(p.range.begin, p.range.end - p.range.begin));
        c.token_estimate = est.count(c.text);
        result.chapters.push_back(std::move(c));
    }
    if (!result.dropped.empty())
        spdlog::info("document '{}': {} chapter(s) beyond the cap of {} dropped", doc.id,
                     result.dropped.size(), max_chapters);
    return result;
}

std::vector<Chunk> chunk_document(const CorpusDocument& doc, ChunkStrategy strategy,
                                  std::size_t size, std::size_t overlap,
                                  const TokenEstimator& est) {
    if (size == 0 || overlap >= size)
        throw Error(ErrorCode::InvalidChunkParams,
                    "need 0 <= overlap < size, got size=" + std::to_string(size) +
                        " overlap=" + std::to_string(overlap));
    std::string_view text(doc.cleaned_text);
    std::vector<Chunk> out;
    auto emit = [&](std::size_t b, std::size_t e) {
        Chunk c;
        c.doc_id = doc.id;
        c.chunk_id = chunk_id(doc.id, strategy, out.size());
        c.span_begin = b;
        c.span_end = e;
        c.text = std::string(text.substr(b, e - b));
        c.token_count = est.count(c.text);
        c.strategy = strategy;
        out.push_back(std::move(c));
    };

    if (strategy == ChunkStrategy::recursive) {
        auto spans = est.spans(text);
        const std::size_t n = spans.size();
        if (n == 0) return out;
        const std::size_t step = size - overlap;
        for (std::size_t first = 0;; first += step) {
            std::size_t last = std::min(first + size, n);
            std::size_t b = first == 0 ? 0 : spans[first].begin;
            std::size_t e = last == n ? text.size() : spans[last - 1].end;
            emit(b, e);
            if (last == n) break;
        }
        return out;
    }

    auto headings = scan_headings(text);
    std::size_t start = 0;
    for (const auto& h : headings) {
        if (h.line_begin > start) {
            if (!out.empty() || !is_blank(text.substr(start, h.line_begin - start))) {
                emit(start, h.line_begin);
                start = h.line_begin;
            }
        }
    }
    if (start < text.size()) emit(start, text.size());
    return out;
}

std::vector<CorpusDocument> load_manifest(const std::filesystem::path& manifest,
                                          const BoilerplatePatterns& patterns) {
    json j;
    try {
        j = json::parse(read_file(manifest));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Parse, manifest.string() + ": " + e.what());
    }
    const auto base = manifest.parent_path();
    std::vector<CorpusDocument> docs;
    for (const auto& d : j.at("documents")) {
        CorpusDocument doc;
        doc.id = d.at("id").get<std::string>();
        doc.path = d.at("path").get<std::string>();
        doc.title = d.value("title", doc.id);
        doc.essential = d.value("essential", false);
        doc.special = d.value("special", false);
        for (const auto& other : docs)
            if (other.id == doc.id)
                throw Error(ErrorCode::InvalidArgument, "duplicate document id '" + doc.id + "'");
        std::filesystem::path p(doc.path);
        doc.raw_text = read_file(p.is_absolute() ? p : base / p);
        doc.cleaned_text = clean_document(doc.raw_text, patterns);
        docs.push_back(std::move(doc));
    }
    return docs;
}

std::string chunks_to_jsonl(const std::vector<Chunk>& chunks) {
    std::string out;
    for (const auto& c : chunks) {
        json j;
        j["doc_id"] = c.doc_id;
        j["chunk_id"] = c.chunk_id;
        j["strategy"] = to_string(c.strategy);
        j["char_span"] = {c.span_begin, c.span_end};
        j["text"] = c.text;
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::vector<Chunk> chunks_from_jsonl(std::string_view jsonl) {
    std::vector<Chunk> out;
    for (const auto& line : split_lines(jsonl)) {
        if (is_blank(line)) continue;
        auto j = json::parse(line);
        Chunk c;
        c.doc_id = j.at("doc_id").get<std::string>();
        c.chunk_id = j.at("chunk_id").get<std::string>();
        c.strategy = parse_chunk_strategy(j.at("strategy").get<std::string>());
        c.span_begin = j.at("char_span").at(0).get<std::size_t>();
        c.span_end = j.at("char_span").at(1).get<std::size_t>();
        c.text = j.at("text").get<std::string>();
        c.token_count = estimate_tokens(c.text);
        out.push_back(std::move(c));
    }
    return out;
}

std::string chapters_to_jsonl(const std::vector<Chapter>& chapters) {
    std::string out;
    for (const auto& c : chapters) {
        json j;
        j["ref"] = c.ref();
        j["doc_id"] = c.doc_id;
        j["index"] = c.index;
        j["heading"] = c.heading;
        j["token_estimate"] = c.token_estimate;
        j["text"] = c.text;
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::vector<Chapter> chapters_from_jsonl(std::string_view jsonl) {
    std::vector<Chapter> out;
    for (const auto& line : split_lines(jsonl)) {
        if (is_blank(line)) continue;
        auto j = json::parse(line);
        Chapter c;
        c.doc_id = j.at("doc_id").get<std::string>();
        c.index = j.at("index").get<std::size_t>();
        c.heading = j.value("heading", "");
        c.text = j.at("text").get<std::string>();
        c.token_estimate = j.value("token_estimate", estimate_tokens(c.text));
        out.push_back(std::move(c));
    }
    return out;
}

}  // namespace domeval::corpus
