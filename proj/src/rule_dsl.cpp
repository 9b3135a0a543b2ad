#include "ifc/rule_dsl.hpp"

#include <cctype>

#include "json.hpp"

namespace ifc {

LExpr LExpr::lab(int i) {
    if (i < 1 || i > 3) throw std::invalid_argument("label variable index out of range");
    return var(static_cast<LabelVar>(i));
}

LExpr LExpr::join(LExpr a, LExpr b) {
    LExpr e(Kind::Join, LabelVar::Pc);
    e.lhs_ = std::make_shared<const LExpr>(std::move(a));
    e.rhs_ = std::make_shared<const LExpr>(std::move(b));
    return e;
}

bool operator==(const LExpr& a, const LExpr& b) {
    if (a.kind_ != b.kind_) return false;
    switch (a.kind_) {
        case LExpr::Kind::Bot: return true;
        case LExpr::Kind::Var: return a.var_ == b.var_;
        case LExpr::Kind::Join: return *a.lhs_ == *b.lhs_ && *a.rhs_ == *b.rhs_;
    }
    return false;
}

BExpr BExpr::flows(LExpr a, LExpr b) {
    BExpr e(Kind::Flows);
    e.la_ = std::make_shared<const LExpr>(std::move(a));
    e.lb_ = std::make_shared<const LExpr>(std::move(b));
    return e;
}

BExpr BExpr::and_(BExpr a, BExpr b) {
    BExpr e(Kind::And);
    e.ba_ = std::make_shared<const BExpr>(std::move(a));
    e.bb_ = std::make_shared<const BExpr>(std::move(b));
    return e;
}

BExpr BExpr::or_(BExpr a, BExpr b) {
    BExpr e = and_(std::move(a), std::move(b));
    e.kind_ = Kind::Or;
    return e;
}

bool operator==(const BExpr& a, const BExpr& b) {
    if (a.kind_ != b.kind_) return false;
    switch (a.kind_) {
        case BExpr::Kind::True: return true;
        case BExpr::Kind::Flows: return *a.la_ == *b.la_ && *a.lb_ == *b.lb_;
        case BExpr::Kind::And:
        case BExpr::Kind::Or: return *a.ba_ == *b.ba_ && *a.bb_ == *b.bb_;
    }
    return false;
}

const SymRule* RuleTable::rule(Opcode op) const {
    auto i = static_cast<std::size_t>(op);
    if (i >= rows_.size() || !rows_[i]) return nullptr;
    return &*rows_[i];
}

void RuleTable::set(Opcode op, SymRule r) {
    auto i = static_cast<std::size_t>(op);
    if (i >= rows_.size())
        throw TableError("opcode " + std::string(opcode_name(op)) + " has no rule row");
    rows_[i] = std::move(r);
}

bool RuleTable::total() const { return missing().empty(); }

std::vector<Opcode> RuleTable::missing() const {
    std::vector<Opcode> out;
    for (Opcode op : rule_opcodes())
        if (!rule(op)) out.push_back(op);
    return out;
}

MissingInput::MissingInput(int index)
    : std::runtime_error("rule references absent input label LAB_" + std::to_string(index)),
      index_(index) {}

RuleTable rabs() {
    const LExpr pc = LExpr::pc(), l1 = LExpr::lab(1), l2 = LExpr::lab(2), l3 = LExpr::lab(3);
    const BExpr tt = BExpr::tt();
    RuleTable t;
    t.set(Opcode::Add, {tt, pc, LExpr::join(l1, l2)});
    t.set(Opcode::Output, {tt, pc, LExpr::join(l1, pc)});
    t.set(Opcode::Push, {tt, pc, LExpr::bot()});
    t.set(Opcode::Load, {tt, pc, LExpr::join(l1, l2)});
    t.set(Opcode::Store,
          {BExpr::flows(LExpr::join(l1, pc), l3), pc, LExpr::join(l1, LExpr::join(l2, pc))});
    t.set(Opcode::Jump, {tt, LExpr::join(l1, pc), std::nullopt});
    t.set(Opcode::Bnz, {tt, LExpr::join(l1, pc), std::nullopt});
    t.set(Opcode::Call, {tt, LExpr::join(l1, pc), pc});
    t.set(Opcode::Ret, {tt, l1, std::nullopt});
    t.set(Opcode::Sub, {tt, pc, LExpr::join(l1, l2)});
    t.set(Opcode::Pop, {tt, pc, std::nullopt});
    t.set(Opcode::Dup, {tt, pc, l1});
    t.set(Opcode::Swap, {tt, pc, std::nullopt});
    t.set(Opcode::Alloc, {tt, pc, l1});
    t.set(Opcode::SizeOf, {tt, pc, l1});
    t.set(Opcode::GetOff, {tt, pc, l1});
    t.set(Opcode::Eq, {tt, pc, LExpr::join(l1, l2)});
    return t;
}

std::vector<NamedTable> mutants() {
    const LExpr pc = LExpr::pc(), l1 = LExpr::lab(1);
    std::vector<NamedTable> out;
    auto mutate = [&](std::string name, Opcode op, auto&& edit) {
        RuleTable t = rabs();
        SymRule r = *t.rule(op);
        edit(r);
        t.set(op, std::move(r));
        out.push_back({std::move(name), std::move(t)});
    };
    mutate("output-no-pc-taint", Opcode::Output, [&](SymRule& r) { r.er = l1; });
    mutate("store-no-nsu", Opcode::Store, [&](SymRule& r) { r.allow = BExpr::tt(); });
    mutate("add-drop-l2", Opcode::Add, [&](SymRule& r) { r.er = l1; });
    mutate("bnz-no-pc-raise", Opcode::Bnz, [&](SymRule& r) { r.erpc = pc; });
    mutate("jump-no-pc-raise", Opcode::Jump, [&](SymRule& r) { r.erpc = pc; });
    return out;
}

std::string format_lexpr(const LExpr& e) {
    switch (e.kind()) {
        case LExpr::Kind::Bot: return "BOT";
        case LExpr::Kind::Join:
            return "join(" + format_lexpr(e.lhs()) + "," + format_lexpr(e.rhs()) + ")";
        case LExpr::Kind::Var: break;
    }
    switch (e.var()) {
        case LabelVar::Pc: return "LabPC";
        case LabelVar::L1: return "Lab1";
        case LabelVar::L2: return "Lab2";
        case LabelVar::L3: return "Lab3";
    }
    return "?";
}

std::string format_bexpr(const BExpr& b) {
    switch (b.kind()) {
        case BExpr::Kind::True: return "TRUE";
        case BExpr::Kind::Flows:
            return "flows(" + format_lexpr(b.flow_lhs()) + "," + format_lexpr(b.flow_rhs()) + ")";
        case BExpr::Kind::And:
            return "and(" + format_bexpr(b.lhs()) + "," + format_bexpr(b.rhs()) + ")";
        case BExpr::Kind::Or:
            return "or(" + format_bexpr(b.lhs()) + "," + format_bexpr(b.rhs()) + ")";
    }
    return "?";
}

namespace {

class ExprParser {
public:
    explicit ExprParser(std::string_view s) : s_(s) {}

    LExpr lexpr() {
        std::string id = ident();
        if (id == "BOT") return LExpr::bot();
        if (id == "LabPC") return LExpr::pc();
        if (id == "Lab1") return LExpr::lab(1);
        if (id == "Lab2") return LExpr::lab(2);
        if (id == "Lab3") return LExpr::lab(3);
        if (id == "join") {
            expect('(');
            LExpr a = lexpr();
            expect(',');
            LExpr b = lexpr();
            expect(')');
            return LExpr::join(std::move(a), std::move(b));
        }
        fail("unknown label expression '" + id + "'");
    }

    BExpr bexpr() {
        std::string id = ident();
        if (id == "TRUE") return BExpr::tt();
        if (id == "flows") {
            expect('(');
            LExpr a = lexpr();
            expect(',');
            LExpr b = lexpr();
            expect(')');
            return BExpr::flows(std::move(a), std::move(b));
        }
        if (id == "and" || id == "or") {
            expect('(');
            BExpr a = bexpr();
            expect(',');
            BExpr b = bexpr();
            expect(')');
            return id == "and" ? BExpr::and_(std::move(a), std::move(b))
                               : BExpr::or_(std::move(a), std::move(b));
        }
        fail("unknown boolean expression '" + id + "'");
    }

    void finish() {
        skip_ws();
        if (pos_ != s_.size()) fail("trailing input");
    }

private:
    [[noreturn]] void fail(const std::string& msg) {
        throw TableError(msg + " in '" + std::string(s_) + "'");
    }

    void skip_ws() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }

    std::string ident() {
        skip_ws();
        std::size_t b = pos_;
        while (pos_ < s_.size() &&
               (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
            ++pos_;
        if (b == pos_) fail("expected identifier");
        return std::string(s_.substr(b, pos_ - b));
    }

    void expect(char c) {
        skip_ws();
        if (pos_ >= s_.size() || s_[pos_] != c) fail(std::string("expected '") + c + "'");
        ++pos_;
    }

    std::string_view s_;
    std::size_t pos_ = 0;
};

}  // namespace

LExpr parse_lexpr(std::string_view s) {
    ExprParser p(s);
    LExpr e = p.lexpr();
    p.finish();
    return e;
}

BExpr parse_bexpr(std::string_view s) {
    ExprParser p(s);
    BExpr e = p.bexpr();
    p.finish();
    return e;
}

RuleTable parse_table(std::string_view json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw TableError(std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw TableError("rule table must be a JSON object");

    RuleTable t;
    for (const auto& [key, row] : j.items()) {
        auto op = opcode_from_name(key);
        if (!op || *op == Opcode::SysCall) throw TableError("unknown opcode '" + key + "'");
        if (!row.is_object()) throw TableError(key + ": row must be an object");
        for (const auto& [field, _] : row.items())
            if (field != "allow" && field != "rpc" && field != "r")
                throw TableError(key + ": unknown field '" + field + "'");
        auto text = [&](const char* field) {
            if (!row.contains(field) || !row[field].is_string())
                throw TableError(key + ": missing string field '" + field + "'");
            return row[field].get<std::string>();
        };
        try {
            SymRule r;
            r.allow = parse_bexpr(text("allow"));
            r.erpc = parse_lexpr(text("rpc"));
            std::string er = text("r");
            auto first = er.find_first_not_of(" \t");
            auto last = er.find_last_not_of(" \t");
            if (first != std::string::npos && er.substr(first, last - first + 1) == "__")
                r.er = std::nullopt;
            else
                r.er = parse_lexpr(er);
            t.set(*op, std::move(r));
        } catch (const TableError& e) {
            throw TableError(key + ": " + e.what());
        }
    }
    return t;
}

std::string format_table(const RuleTable& t) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (Opcode op : rule_opcodes()) {
        const SymRule* r = t.rule(op);
        if (!r) continue;
        j[std::string(opcode_name(op))] = {
            {"allow", format_bexpr(r->allow)},
            {"rpc", format_lexpr(r->erpc)},
            {"r", r->er ? format_lexpr(*r->er) : std::string("__")},
        };
    }
    return j.dump(2);
}

}  // namespace ifc
