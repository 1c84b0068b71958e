#pragma once

// Shared plumbing: error taxonomy, deterministic RNG, UTF-8 helpers,
// small hashing/formatting utilities used across the library.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lingqa {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

enum class ErrorKind {
    MalformedJson,
    SchemaViolation,
    SpanMismatch,
    BadCount,
    EmptyCorpus,
    EmptyDataset,
    EmptyFile,
    DuplicateLabel,
    MalformedLine,
    UnknownKind,
    CoverageGap,
    ConfigViolation,
    ShapeMismatch,
    IndexOutOfRange,
    NonScalarLoss,
    LabelOutOfRange,
    DeadTarget,
    NonFiniteLoss,
    CheckpointMismatch,
    MissingPrediction,
    IoError,
};

inline const char* error_kind_name(ErrorKind k) {
    switch (k) {
        case ErrorKind::MalformedJson: return "MalformedJson";
        case ErrorKind::SchemaViolation: return "SchemaViolation";
        case ErrorKind::SpanMismatch: return "SpanMismatch";
        case ErrorKind::BadCount: return "BadCount";
        case ErrorKind::EmptyCorpus: return "EmptyCorpus";
        case ErrorKind::EmptyDataset: return "EmptyDataset";
        case ErrorKind::EmptyFile: return "EmptyFile";
        case ErrorKind::DuplicateLabel: return "DuplicateLabel";
        case ErrorKind::MalformedLine: return "MalformedLine";
        case ErrorKind::UnknownKind: return "UnknownKind";
        case ErrorKind::CoverageGap: return "CoverageGap";
        case ErrorKind::ConfigViolation: return "ConfigViolation";
        case ErrorKind::ShapeMismatch: return "ShapeMismatch";
        case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
        case ErrorKind::NonScalarLoss: return "NonScalarLoss";
        case ErrorKind::LabelOutOfRange: return "LabelOutOfRange";
        case ErrorKind::DeadTarget: return "DeadTarget";
        case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
        case ErrorKind::CheckpointMismatch: return "CheckpointMismatch";
        case ErrorKind::MissingPrediction: return "MissingPrediction";
        case ErrorKind::IoError: return "IoError";
    }
    return "Unknown";
}

class QaError : public std::runtime_error {
public:
    QaError(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(error_kind_name(kind)) + ": " + message),
          kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw QaError(kind, message);
}

// ---------------------------------------------------------------------------
// Deterministic counter-based RNG.
//
// splitmix64 over (key, counter) pairs: the same key always yields the same
// stream regardless of what other streams were drawn in between. Used for
// dataset splits, parameter init, shuffling and dropout.
// ---------------------------------------------------------------------------

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t mix_key(uint64_t seed, std::string_view stream) {
    uint64_t h = seed ^ 0x51f0f7f8a4c5e2d3ULL;
    for (char c : stream) h = splitmix64(h ^ static_cast<uint8_t>(c));
    return h;
}

class CounterRng {
public:
    explicit CounterRng(uint64_t key) : key_(key) {}
    CounterRng(uint64_t seed, std::string_view stream) : key_(mix_key(seed, stream)) {}

    uint64_t next_u64() { return splitmix64(key_ ^ splitmix64(counter_++)); }

    // uniform in [0, 1)
    double next_uniform() {
        return static_cast<double>(next_u64() >> 11) * (1.0 / 9007199254740992.0);
    }

    // uniform integer in [0, n)
    uint64_t next_below(uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

    // standard normal via Box-Muller
    double next_normal() {
        double u1 = next_uniform();
        double u2 = next_uniform();
        while (u1 <= 1e-300) u1 = next_uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

private:
    uint64_t key_;
    uint64_t counter_ = 0;
};

// ---------------------------------------------------------------------------
// UTF-8 handling. Offsets throughout the library are in Unicode scalar
// values (codepoints), matching SQuAD's character-based answer offsets.
// Invalid bytes decode as single-byte codepoints so decoding is total.
// ---------------------------------------------------------------------------

struct Utf8Text {
    std::vector<uint32_t> codepoints;
    std::vector<size_t> byte_start;  // codepoint index -> byte offset; one extra entry = total bytes

    size_t size() const { return codepoints.size(); }
};

inline Utf8Text utf8_decode(std::string_view s) {
    Utf8Text out;
    size_t i = 0;
    const size_t n = s.size();
    while (i < n) {
        out.byte_start.push_back(i);
        uint8_t b0 = static_cast<uint8_t>(s[i]);
        uint32_t cp = b0;
        size_t len = 1;
        if (b0 >= 0xF0 && i + 3 < n) {
            cp = (b0 & 0x07u) << 18 | (static_cast<uint8_t>(s[i + 1]) & 0x3Fu) << 12 |
                 (static_cast<uint8_t>(s[i + 2]) & 0x3Fu) << 6 | (static_cast<uint8_t>(s[i + 3]) & 0x3Fu);
            len = 4;
        } else if (b0 >= 0xE0 && i + 2 < n) {
            cp = (b0 & 0x0Fu) << 12 | (static_cast<uint8_t>(s[i + 1]) & 0x3Fu) << 6 |
                 (static_cast<uint8_t>(s[i + 2]) & 0x3Fu);
            len = 3;
        } else if (b0 >= 0xC0 && i + 1 < n) {
            cp = (b0 & 0x1Fu) << 6 | (static_cast<uint8_t>(s[i + 1]) & 0x3Fu);
            len = 2;
        }
        out.codepoints.push_back(cp);
        i += len;
    }
    out.byte_start.push_back(n);
    return out;
}

inline size_t utf8_length(std::string_view s) { return utf8_decode(s).codepoints.size(); }

// substring by codepoint range [from, to)
inline std::string utf8_slice(std::string_view s, const Utf8Text& decoded, size_t from, size_t to) {
    if (from > to || to > decoded.size()) return std::string();
    return std::string(s.substr(decoded.byte_start[from], decoded.byte_start[to] - decoded.byte_start[from]));
}

inline std::string utf8_slice(std::string_view s, size_t from, size_t to) {
    return utf8_slice(s, utf8_decode(s), from, to);
}

inline void utf8_append(std::string& out, uint32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

inline bool is_space_cp(uint32_t cp) {
    return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\f' || cp == '\v' ||
           cp == 0xA0 || (cp >= 0x2000 && cp <= 0x200A) || cp == 0x2028 || cp == 0x2029 ||
           cp == 0x202F || cp == 0x3000;
}

// ASCII punctuation plus the common Unicode punctuation blocks (general
// punctuation, CJK symbols, fullwidth forms, Latin-1 marks).
inline bool is_punct_cp(uint32_t cp) {
    if ((cp >= 33 && cp <= 47) || (cp >= 58 && cp <= 64) || (cp >= 91 && cp <= 96) ||
        (cp >= 123 && cp <= 126))
        return true;
    if (cp == 0xA1 || cp == 0xA7 || cp == 0xAB || cp == 0xB6 || cp == 0xB7 || cp == 0xBB ||
        cp == 0xBF)
        return true;
    if (cp >= 0x2010 && cp <= 0x2027) return true;
    if (cp >= 0x2030 && cp <= 0x205E) return true;
    if (cp == 0x3001 || cp == 0x3002 || (cp >= 0x3008 && cp <= 0x3011) ||
        (cp >= 0x3014 && cp <= 0x301F))
        return true;
    if ((cp >= 0xFF01 && cp <= 0xFF0F) || (cp >= 0xFF1A && cp <= 0xFF20) ||
        (cp >= 0xFF3B && cp <= 0xFF40) || (cp >= 0xFF5B && cp <= 0xFF65))
        return true;
    return false;
}

inline bool is_ascii_digit(uint32_t cp) { return cp >= '0' && cp <= '9'; }
inline bool is_ascii_alpha(uint32_t cp) {
    return (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z');
}

// word character for tokenization: alphanumeric, or any non-space
// non-punctuation codepoint outside ASCII
inline bool is_word_cp(uint32_t cp) {
    if (cp < 128) return is_ascii_alpha(cp) || is_ascii_digit(cp);
    return !is_space_cp(cp) && !is_punct_cp(cp);
}

inline uint32_t ascii_lower_cp(uint32_t cp) {
    return (cp >= 'A' && cp <= 'Z') ? cp + 32 : cp;
}

inline std::string ascii_lower(std::string_view s) {
    std::string out(s);
    for (char& c : out)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c + 32);
    return out;
}

// ---------------------------------------------------------------------------
// FNV-1a hashing, used for cache keys and run manifests.
// ---------------------------------------------------------------------------

inline uint64_t fnv1a64(std::string_view data, uint64_t h = 0xcbf29ce484222325ULL) {
    for (char c : data) {
        h ^= static_cast<uint8_t>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<size_t>(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return out;
}

inline std::string format_shape(const std::vector<size_t>& shape) {
    std::string out = "(";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(shape[i]);
    }
    out += ")";
    return out;
}

}  // namespace lingqa
