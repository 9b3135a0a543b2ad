#pragma once

#include <array>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ifc/isa.hpp"
#include "ifc/lattice.hpp"

namespace ifc {

enum class LabelVar : std::uint8_t { Pc, L1, L2, L3 };

class LExpr {
public:
    enum class Kind : std::uint8_t { Bot, Var, Join };

    static LExpr bot() { return LExpr(Kind::Bot, LabelVar::Pc); }
    static LExpr var(LabelVar v) { return LExpr(Kind::Var, v); }
    static LExpr pc() { return var(LabelVar::Pc); }
    static LExpr lab(int i);  // i in 1..3
    static LExpr join(LExpr a, LExpr b);

    Kind kind() const { return kind_; }
    LabelVar var() const { return var_; }
    const LExpr& lhs() const { return *lhs_; }
    const LExpr& rhs() const { return *rhs_; }

    friend bool operator==(const LExpr& a, const LExpr& b);

private:
    LExpr(Kind k, LabelVar v) : kind_(k), var_(v) {}
    Kind kind_;
    LabelVar var_;
    std::shared_ptr<const LExpr> lhs_, rhs_;
};

class BExpr {
public:
    enum class Kind : std::uint8_t { True, Flows, And, Or };

    static BExpr tt() { return BExpr(Kind::True); }
    static BExpr flows(LExpr a, LExpr b);
    static BExpr and_(BExpr a, BExpr b);
    static BExpr or_(BExpr a, BExpr b);

    Kind kind() const { return kind_; }
    const LExpr& flow_lhs() const { return *la_; }
    const LExpr& flow_rhs() const { return *lb_; }
    const BExpr& lhs() const { return *ba_; }
    const BExpr& rhs() const { return *bb_; }

    friend bool operator==(const BExpr& a, const BExpr& b);

private:
    explicit BExpr(Kind k) : kind_(k) {}
    Kind kind_;
    std::shared_ptr<const LExpr> la_, lb_;
    std::shared_ptr<const BExpr> ba_, bb_;
};

struct SymRule {
    BExpr allow = BExpr::tt();
    LExpr erpc = LExpr::pc();
    std::optional<LExpr> er;  // nullopt is "don't care", evaluated as bot
    friend bool operator==(const SymRule&, const SymRule&) = default;
};

class RuleTable {
public:
    const SymRule* rule(Opcode op) const;
    void set(Opcode op, SymRule r);
    bool total() const;
    std::vector<Opcode> missing() const;
    friend bool operator==(const RuleTable&, const RuleTable&) = default;

private:
    std::array<std::optional<SymRule>, kRuleOpcodeCount> rows_{};
};

class MissingInput : public std::runtime_error {
public:
    explicit MissingInput(int index);
    int index() const { return index_; }

private:
    int index_;
};

class TableError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

template <Lattice L>
struct RVec {
    L pc{};
    std::array<std::optional<L>, 3> args{};
};

template <Lattice L>
struct RuleResult {
    L rpc;
    L r;
    bool operator==(const RuleResult&) const = default;
};

template <Lattice L>
L eval_lexpr(const RVec<L>& rv, const LExpr& e) {
    switch (e.kind()) {
        case LExpr::Kind::Bot: return L::bot();
        case LExpr::Kind::Join: return join(eval_lexpr(rv, e.lhs()), eval_lexpr(rv, e.rhs()));
        case LExpr::Kind::Var: break;
    }
    if (e.var() == LabelVar::Pc) return rv.pc;
    int i = static_cast<int>(e.var()) - 1;
    if (!rv.args[i]) throw MissingInput(i + 1);
    return *rv.args[i];
}

template <Lattice L>
bool eval_bexpr(const RVec<L>& rv, const BExpr& b) {
    switch (b.kind()) {
        case BExpr::Kind::True: return true;
        case BExpr::Kind::Flows:
            return flows(eval_lexpr(rv, b.flow_lhs()), eval_lexpr(rv, b.flow_rhs()));
        case BExpr::Kind::And: {
            bool x = eval_bexpr(rv, b.lhs());
            bool y = eval_bexpr(rv, b.rhs());
            return x && y;
        }
        case BExpr::Kind::Or: {
            bool x = eval_bexpr(rv, b.lhs());
            bool y = eval_bexpr(rv, b.rhs());
            return x || y;
        }
    }
    return false;
}

// Throws MissingInput when a referenced input label is absent, and
// TableError when the table has no row for op.
template <Lattice L>
std::optional<RuleResult<L>> apply_table(const RuleTable& t, Opcode op, const RVec<L>& rv) {
    const SymRule* rule = t.rule(op);
    if (!rule) throw TableError("no rule for opcode " + std::string(opcode_name(op)));
    if (!eval_bexpr(rv, rule->allow)) return std::nullopt;
    L rpc = eval_lexpr(rv, rule->erpc);
    L r = rule->er ? eval_lexpr(rv, *rule->er) : L::bot();
    return RuleResult<L>{std::move(rpc), std::move(r)};
}

RuleTable rabs();

struct NamedTable {
    std::string name;
    RuleTable table;
};

std::vector<NamedTable> mutants();

std::string format_lexpr(const LExpr& e);
std::string format_bexpr(const BExpr& b);
LExpr parse_lexpr(std::string_view s);
BExpr parse_bexpr(std::string_view s);

RuleTable parse_table(std::string_view json_text);
std::string format_table(const RuleTable& t);

}  // namespace ifc
