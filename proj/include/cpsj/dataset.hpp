#pragma once

// Token-set records, dataset ingestion and exact Jaccard arithmetic.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace cpsj {

using Token = std::uint32_t;
using RecordId = std::uint32_t;

/// A set of tokens stored as a strictly increasing list.
struct Record {
    std::vector<Token> tokens;

    std::size_t size() const noexcept { return tokens.size(); }
    bool empty() const noexcept { return tokens.empty(); }

    friend bool operator==(const Record&, const Record&) = default;
    friend auto operator<=>(const Record&, const Record&) = default;
};

/// Sorts and deduplicates an arbitrary token list into a Record.
inline Record make_record(std::vector<Token> tokens) {
    std::sort(tokens.begin(), tokens.end());
    tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
    return Record{std::move(tokens)};
}

/// Thrown for malformed dataset input. Carries the 1-based line number.
class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Similarity threshold lambda in (0,1).
///
/// A pair qualifies when its similarity, rounded to double, is >= lambda; this
/// is what `jaccard(a, b) >= lambda` computes. The integer helpers below work
/// with lambda - ulp(lambda)/2, which lies below every ratio that rounds to
/// lambda or above, so filters built on them never drop a qualifying pair.
/// That bound is a dyadic rational mantissa / 2^shift and all arithmetic on it
/// is exact in 128 bits.
class SimilarityThreshold {
public:
    explicit SimilarityThreshold(double lambda) : lambda_(lambda) {
        if (!(lambda > 0.0 && lambda < 1.0)) {
            throw std::invalid_argument("similarity threshold must lie in (0,1), got " +
                                        std::to_string(lambda));
        }
        int exp = 0;
        const double frac = std::frexp(lambda, &exp);  // lambda = frac * 2^exp, frac in [0.5,1)
        const auto mantissa = static_cast<std::uint64_t>(std::ldexp(frac, 53));
        mantissa_ = 2 * mantissa - 1;
        shift_ = 54 - exp;
    }

    double value() const noexcept { return lambda_; }

    /// Smallest integer c with c / n admissible as far as the lower bound can
    /// tell; every admissible count is at least this.
    std::uint64_t ceil_times(std::uint64_t n) const noexcept {
        if (n == 0) return 0;
        if (shift_ > kMaxShift) return 1;  // 0 < lambda * n < 1
        const Wide num = static_cast<Wide>(mantissa_) * n;
        const Wide den = Wide{1} << shift_;
        return static_cast<std::uint64_t>((num + den - 1) >> shift_);
    }

    /// True iff num / den, rounded to double, is >= lambda (den > 0).
    bool admits(std::uint64_t num, std::uint64_t den) const noexcept {
        if (num >= den) return true;
        return num >= ceil_times(den) && static_cast<double>(num) / static_cast<double>(den) >= lambda_;
    }

    /// Lower bound on the overlap o of two sets with |a| + |b| = size_sum for
    /// o / (size_sum - o) to be admissible: ceil(bound * size_sum / (1 + bound)).
    std::uint64_t required_overlap(std::uint64_t size_sum) const noexcept {
        if (size_sum == 0) return 0;
        if (shift_ > kMaxShift) return 1;
        const Wide num = static_cast<Wide>(mantissa_) * size_sum;
        const Wide den = (Wide{1} << shift_) + mantissa_;
        return static_cast<std::uint64_t>((num + den - 1) / den);
    }

private:
    using Wide = unsigned __int128;
    // Keeps mantissa * n + 2^shift inside 128 bits for n < 2^34.
    static constexpr int kMaxShift = 92;

    double lambda_;
    std::uint64_t mantissa_ = 0;
    int shift_ = 0;
};

/// Sizes of |a ∩ b| by linear merge of two sorted token lists.
inline std::size_t intersection_size(std::span<const Token> a, std::span<const Token> b) noexcept {
    std::size_t i = 0, j = 0, overlap = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] == b[j]) {
            ++overlap;
            ++i;
            ++j;
        } else if (a[i] < b[j]) {
            ++i;
        } else {
            ++j;
        }
    }
    return overlap;
}

inline double jaccard(const Record& a, const Record& b) noexcept {
    const std::size_t inter = intersection_size(a.tokens, b.tokens);
    const std::size_t uni = a.size() + b.size() - inter;
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// Same decision as jaccard(a, b) >= lambda. The merge stops as soon as the
/// remaining tokens cannot lift the overlap to the required amount.
inline bool verify_pair(const Record& a, const Record& b, const SimilarityThreshold& lambda) noexcept {
    const std::size_t na = a.size(), nb = b.size();
    const std::uint64_t need = lambda.required_overlap(na + nb);
    if (need > std::min(na, nb)) return false;
    std::size_t i = 0, j = 0, overlap = 0;
    while (i < na && j < nb) {
        if (overlap + std::min(na - i, nb - j) < need) return false;
        if (a.tokens[i] == b.tokens[j]) {
            ++overlap;
            ++i;
            ++j;
        } else if (a.tokens[i] < b.tokens[j]) {
            ++i;
        } else {
            ++j;
        }
    }
    return overlap >= need && lambda.admits(overlap, na + nb - overlap);
}

/// A preprocessed collection of records: no singletons, no duplicate sets.
class Dataset {
public:
    Dataset() = default;

    /// Builds a dataset from already canonical records. When `dedupe` is set,
    /// singletons and repeated sets are dropped (first occurrence wins).
    /// `source_lines` gives the input line of each record; defaults to 1..n.
    static Dataset from_records(std::vector<Record> records, bool dedupe = true,
                                std::vector<std::size_t> source_lines = {}) {
        if (source_lines.empty()) {
            source_lines.resize(records.size());
            for (std::size_t i = 0; i < records.size(); ++i) source_lines[i] = i + 1;
        }
        if (source_lines.size() != records.size()) {
            throw std::invalid_argument("source line map does not match record count");
        }
        Dataset ds;
        std::unordered_set<std::string> seen;
        for (std::size_t i = 0; i < records.size(); ++i) {
            Record& rec = records[i];
            if (!std::is_sorted(rec.tokens.begin(), rec.tokens.end()) ||
                std::adjacent_find(rec.tokens.begin(), rec.tokens.end()) != rec.tokens.end()) {
                rec = make_record(std::move(rec.tokens));
            }
            if (dedupe) {
                if (rec.size() < 2) continue;
                std::string key(reinterpret_cast<const char*>(rec.tokens.data()),
                                rec.tokens.size() * sizeof(Token));
                if (!seen.insert(std::move(key)).second) continue;
            } else if (rec.empty()) {
                throw std::invalid_argument("empty record");
            }
            ds.records_.push_back(std::move(rec));
            ds.source_lines_.push_back(source_lines[i]);
        }
        for (const Record& rec : ds.records_) {
            for (Token tok : rec.tokens) ++ds.frequency_[tok];
            ds.universe_size_ = std::max<std::uint64_t>(ds.universe_size_, std::uint64_t{rec.tokens.back()} + 1);
        }
        return ds;
    }

    std::size_t size() const noexcept { return records_.size(); }
    bool empty() const noexcept { return records_.empty(); }
    const Record& operator[](std::size_t i) const noexcept { return records_[i]; }
    const std::vector<Record>& records() const noexcept { return records_; }

    /// Input line (1-based) each record came from.
    std::size_t source_line(std::size_t i) const noexcept { return source_lines_[i]; }
    const std::vector<std::size_t>& source_lines() const noexcept { return source_lines_; }

    /// Number of records containing `tok`.
    std::uint32_t frequency(Token tok) const {
        auto it = frequency_.find(tok);
        return it == frequency_.end() ? 0 : it->second;
    }
    const std::unordered_map<Token, std::uint32_t>& token_frequency() const noexcept { return frequency_; }

    /// Max token id + 1 (0 for an empty dataset).
    std::uint64_t universe_size() const noexcept { return universe_size_; }

    std::size_t total_tokens() const noexcept {
        std::size_t total = 0;
        for (const Record& r : records_) total += r.size();
        return total;
    }

private:
    std::vector<Record> records_;
    std::vector<std::size_t> source_lines_;
    std::unordered_map<Token, std::uint32_t> frequency_;
    std::uint64_t universe_size_ = 0;
};

namespace detail {

inline bool is_blank(char c) noexcept { return c == ' ' || c == '\t' || c == '\r'; }

template <typename Fn>
void for_each_field(std::string_view line, Fn&& fn) {
    std::size_t pos = 0;
    while (pos < line.size()) {
        while (pos < line.size() && is_blank(line[pos])) ++pos;
        std::size_t end = pos;
        while (end < line.size() && !is_blank(line[end])) ++end;
        if (end > pos) fn(line.substr(pos, end - pos));
        pos = end;
    }
}

}  // namespace detail

/// Reads one record per line of base-10 unsigned 32-bit tokens.
///
/// With `tokenize` set, fields are arbitrary strings mapped to fresh ids in
/// order of first appearance instead.
inline Dataset parse_dataset(std::istream& in, bool tokenize = false) {
    std::vector<Record> records;
    std::vector<std::size_t> lines;
    std::unordered_map<std::string, Token> vocabulary;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::vector<Token> tokens;
        detail::for_each_field(line, [&](std::string_view field) {
            if (tokenize) {
                auto [it, fresh] = vocabulary.try_emplace(std::string(field), static_cast<Token>(vocabulary.size()));
                tokens.push_back(it->second);
                return;
            }
            Token value = 0;
            const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
            if (ec == std::errc::result_out_of_range) {
                throw ParseError(line_no, "token out of 32-bit range: '" + std::string(field) + "'");
            }
            if (ec != std::errc{} || ptr != field.data() + field.size()) {
                throw ParseError(line_no, "malformed token '" + std::string(field) + "'");
            }
            tokens.push_back(value);
        });
        if (tokens.empty()) continue;
        records.push_back(make_record(std::move(tokens)));
        lines.push_back(line_no);
    }
    return Dataset::from_records(std::move(records), true, std::move(lines));
}

inline void write_dataset(std::ostream& out, const Dataset& ds) {
    for (const Record& rec : ds.records()) {
        for (std::size_t i = 0; i < rec.size(); ++i) {
            if (i) out << ' ';
            out << rec.tokens[i];
        }
        out << '\n';
    }
}

/// 64-bit FNV-1a over the canonical record contents (sizes and tokens,
/// little-endian). Identifies a preprocessed dataset independent of the
/// input formatting.
inline std::uint64_t fingerprint(const Dataset& ds) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](std::uint32_t word) {
        for (int b = 0; b < 4; ++b) {
            h ^= (word >> (8 * b)) & 0xffU;
            h *= 0x100000001b3ULL;
        }
    };
    feed(static_cast<std::uint32_t>(ds.size()));
    for (const Record& rec : ds.records()) {
        feed(static_cast<std::uint32_t>(rec.size()));
        for (Token t : rec.tokens) feed(t);
    }
    return h;
}

}  // namespace cpsj
