#pragma once

// Synthetic SQuAD-format corpora for tests: short contexts with planted
// answers at known offsets, a configurable unanswerable fraction, and
// optional filler sentences to force context truncation.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "lingqa/common.hpp"

namespace synth {

struct Options {
    size_t n_examples = 32;
    size_t unanswerable_every = 4;  // every k-th example is unanswerable
    uint64_t seed = 7;
    size_t filler_sentences = 0;  // appended after the answer-bearing text
};

inline const std::vector<std::string>& names() {
    static const std::vector<std::string> v = {"Amara", "Bolat",  "Chen",  "Dara", "Elif",
                                               "Farid", "Goran",  "Hana",  "Iris", "Jonas",
                                               "Kira",  "Liam",   "Mina",  "Nadia", "Omar",
                                               "Petra"};
    return v;
}
inline const std::vector<std::string>& cities() {
    static const std::vector<std::string> v = {"Avalon",    "Brightwater", "Corville",
                                               "Dunmore",   "Elmstead",    "Fairhaven",
                                               "Grimsby",   "Hollowell",   "Ironford",
                                               "Juniper",   "Kestrel",     "Larkspur"};
    return v;
}
inline const std::vector<std::string>& trades() {
    static const std::vector<std::string> v = {"glass bridges", "salt mining",  "mirror lakes",
                                               "copper bells",  "stone gardens", "wind towers",
                                               "paper boats",   "amber trade"};
    return v;
}

struct Planted {
    std::string text;
    size_t start = 0;
};

// one paragraph + one question per example
inline nlohmann::json make_squad_json(const Options& opt) {
    lingqa::CounterRng rng(opt.seed, "synth");
    nlohmann::json paragraphs = nlohmann::json::array();

    for (size_t i = 0; i < opt.n_examples; ++i) {
        const std::string& name = names()[rng.next_below(names().size())];
        const std::string& city = cities()[rng.next_below(cities().size())];
        const std::string year = std::to_string(1820 + 7 * rng.next_below(24));
        const std::string& trade = trades()[rng.next_below(trades().size())];

        std::string context;
        auto put = [&](const std::string& s) {
            Planted p{s, context.size()};  // ASCII corpus: byte offset == codepoint offset
            context += s;
            return p;
        };
        Planted p_name = put(name);
        put(" founded ");
        Planted p_city = put(city);
        put(" in ");
        Planted p_year = put(year);
        put(". The town is known for ");
        Planted p_trade = put(trade);
        put(".");
        for (size_t f = 0; f < opt.filler_sentences; ++f)
            put(" Later records mention festivals and busy market days along the river.");

        const bool unanswerable = opt.unanswerable_every > 0 && (i % opt.unanswerable_every) == 3;
        std::string question;
        nlohmann::json answers = nlohmann::json::array();
        if (unanswerable) {
            question = "Who destroyed " + city + "?";
        } else {
            switch (i % 3) {
                case 0:
                    question = "Who founded " + city + "?";
                    answers.push_back({{"text", p_name.text}, {"answer_start", p_name.start}});
                    break;
                case 1:
                    question = "When was " + city + " founded?";
                    answers.push_back({{"text", p_year.text}, {"answer_start", p_year.start}});
                    break;
                default:
                    question = "What is " + city + " known for?";
                    answers.push_back({{"text", p_trade.text}, {"answer_start", p_trade.start}});
                    break;
            }
        }
        (void)p_city;

        nlohmann::json qa = {{"id", "synth-" + std::to_string(i)},
                             {"question", question},
                             {"answers", answers},
                             {"is_impossible", unanswerable}};
        paragraphs.push_back({{"context", context}, {"qas", nlohmann::json::array({qa})}});
    }
    return {{"version", "v2.0"},
            {"data", nlohmann::json::array({{{"title", "synth"}, {"paragraphs", paragraphs}}})}};
}

inline std::string write_squad_file(const std::string& dir, const std::string& name,
                                    const Options& opt) {
    std::filesystem::create_directories(dir);
    const std::string path = dir + "/" + name;
    std::ofstream out(path, std::ios::binary);
    out << make_squad_json(opt).dump(2) << "\n";
    return path;
}

// fresh scratch directory under the test working directory
inline std::string temp_dir(const std::string& name) {
    const std::string dir = "test_tmp/" + name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace synth
