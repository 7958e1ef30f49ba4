"""A small in-memory DLT network for ledger-level tests."""

from nbiotdlt.crypto import KeyPair
from nbiotdlt.ledger import (CONTRACT_CLIENT, AverageAlarmContract, Block, EndorsedTransaction,
                             EndorsementPolicy, EndorsingPeer, Ledger, Membership, Orderer,
                             OrdererConfig, encode_reading, make_proposal)

CLIENTS = ("ue-0", "ue-1")


class Net:
    def __init__(self, E=2, n_peers=4, payload=50, tag="net", threshold=1000.0, window=6,
                 orderer_cfg=None):
        self.payload = payload
        self.peers = [f"peer-{i}" for i in range(n_peers)]
        self.policy = EndorsementPolicy(E, self.peers)
        self.members = Membership()
        self.keys = {}
        for actor in [*self.peers, *CLIENTS, CONTRACT_CLIENT]:
            kp = KeyPair.from_seed(f"{tag}:{actor}")
            self.keys[actor] = kp
            self.members.add(actor, kp)
        self.contract = AverageAlarmContract(threshold, window)
        self.ledger = Ledger(self.policy, self.members, self.contract)
        self.endorsers = {p: EndorsingPeer(p, self.keys[p], self.members, self.ledger, payload)
                          for p in self.peers}
        self.orderer = Orderer(orderer_cfg or OrdererConfig(), self.policy, self.members)
        self._nonce = 0

    def proposal(self, client="ue-0", value=450.0, seq=0, ts=0, nonce=None):
        if nonce is None:
            self._nonce += 1
            nonce = self._nonce
        return make_proposal(client, self.keys[client], encode_reading(seq, value, self.payload),
                             ts, nonce)

    def endorse(self, proposal, peers=None):
        peers = self.peers[:self.policy.required_E] if peers is None else peers
        return EndorsedTransaction(proposal, tuple(self.endorsers[p].endorse(proposal) for p in peers))

    def tx(self, client="ue-0", value=450.0, **kw):
        return self.endorse(self.proposal(client, value, **kw))

    def block(self, etxs):
        return Block.build(self.ledger.height, self.ledger.tip, etxs)

    def commit(self, etxs):
        return self.ledger.validate_and_commit(self.block(etxs))
