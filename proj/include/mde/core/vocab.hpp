#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace mde {

constexpr int kBosId = 0;
constexpr int kEosId = 1;

inline bool is_special_token(int id) { return id == kBosId || id == kEosId; }

// Word-level vocabulary. File format: one token per line, line number = id,
// ids 0 and 1 reserved for the begin/end markers.
class Vocabulary {
public:
    Vocabulary() = default;
    explicit Vocabulary(std::vector<std::string> words);

    static Vocabulary load(const std::string& path);
    static Vocabulary toy_default();
    void save(const std::string& path) const;

    int id_of(const std::string& word) const;  // throws UnknownWordError
    bool contains(const std::string& word) const;
    const std::string& word_of(int id) const;
    int size() const { return static_cast<int>(words_.size()); }

    std::uint64_t hash() const;

    // [BOS, word ids..., EOS]; "" tokenizes to [BOS, EOS].
    std::vector<int> tokenize(const std::string& prompt) const;
    std::string detokenize(const std::vector<int>& ids) const;

private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, int> index_;
};

// Greedy longest-common-subsequence alignment over token ids; see
// TokenAlignment for the classification contract.
struct TokenAlignment;
TokenAlignment align_tokens(const std::vector<int>& src_ids, const std::vector<int>& tgt_ids);

}  // namespace mde
