#pragma once

#include <map>
#include <mutex>
#include <set>
#include <tuple>
#include <variant>
#include <vector>

#include "rdmpc/contract.hpp"
#include "rdmpc/types.hpp"

namespace rdmpc {

enum class MessageKind { Nominal = 0, Deviation = 1, Sensitivities = 2, Contract = 3 };

const char* to_string(MessageKind k);

struct NominalCoeffs {
    Mat coeffs;  // components x stages
};

struct DeviationMsg {
    Vec deviation;
};

struct SensitivityMsg {
    Mat s_a;
    Mat s_z;
};

struct ContractMsg {
    Contract contract;
};

using Payload = std::variant<NominalCoeffs, DeviationMsg, SensitivityMsg, ContractMsg>;

struct Message {
    int sender = 0;
    int receiver = 0;
    long round = 0;
    Payload payload;

    MessageKind kind() const { return static_cast<MessageKind>(payload.index()); }
};

// In-process neighbor bus with per-round delivery.
class Bus {
public:
    explicit Bus(const std::map<int, std::vector<int>>& neighbors);

    void post(Message message);
    // One message per neighbor and kind, sorted by sender then kind.
    std::vector<Message> collect(int receiver, long round, const std::vector<MessageKind>& kinds);
    void close_round(long round);
    int duplicates() const;

private:
    using Key = std::tuple<long, int, int, int>;  // round, receiver, sender, kind
    std::map<int, std::set<int>> neighbors_;
    std::map<Key, Message> inbox_;
    int duplicates_ = 0;
    mutable std::mutex mutex_;
};

}  // namespace rdmpc
