#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "crossfont/data/stroke_alphabet.hpp"

namespace crossfont {

/// Stroke database file: UTF-8 text, one `char_id<TAB>id,id,...` per line,
/// `#` starts a comment line. Entries must satisfy StrokeSequence invariants;
/// offending entries are rejected with the line number.
inline std::map<std::string, StrokeSequence> load_stroke_db(const std::string& path,
                                                            const StrokeAlphabet& alphabet) {
    std::ifstream in(path);
    require(bool(in), "load_stroke_db: cannot open " + path);
    std::map<std::string, StrokeSequence> db;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto tab = line.find('\t');
        require(tab != std::string::npos,
                path + ":" + std::to_string(line_no) + ": expected char_id<TAB>labels");
        StrokeSequence seq;
        seq.char_id = line.substr(0, tab);
        require(!seq.char_id.empty(), path + ":" + std::to_string(line_no) + ": empty char_id");
        std::string rest = line.substr(tab + 1);
        std::istringstream fields(rest);
        std::string tok;
        while (std::getline(fields, tok, ',')) {
            try {
                std::size_t used = 0;
                long v = std::stol(tok, &used);
                require(used == tok.size(), "trailing junk");
                seq.labels.push_back(v);
            } catch (const std::exception&) {
                throw Error(path + ":" + std::to_string(line_no) + ": bad label '" + tok + "'");
            }
        }
        try {
            seq.validate(alphabet);
        } catch (const Error& e) {
            throw Error(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        require(db.find(seq.char_id) == db.end(),
                path + ":" + std::to_string(line_no) + ": duplicate char_id " + seq.char_id);
        db.emplace(seq.char_id, std::move(seq));
    }
    return db;
}

inline void save_stroke_db(const std::string& path,
                           const std::map<std::string, StrokeSequence>& db) {
    std::ofstream out(path, std::ios::trunc);
    require(bool(out), "save_stroke_db: cannot open " + path);
    out << "# char_id<TAB>comma-separated stroke class ids\n";
    for (const auto& [id, seq] : db) {
        out << id << '\t';
        for (std::size_t i = 0; i < seq.labels.size(); ++i) {
            if (i) out << ',';
            out << seq.labels[i];
        }
        out << '\n';
    }
    require(bool(out), "save_stroke_db: write failed for " + path);
}

}  // namespace crossfont
