"""Tiny trainable encoder-decoder backend.

Single-layer encoder, single-layer decoder, one attention head, learned
token and position embeddings, double precision throughout, plain SGD.
Small enough that fine-tuning on a K-shot task takes seconds on CPU, but
it is a genuine sequence-to-sequence model trained with cross-entropy.
"""

from __future__ import annotations

import copy
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch
from torch import nn

from .errors import BackendError, DataError
from .model import ConditionalSequenceModel, FineTuneConfig, TokenSeq, Vocab
from .templating import RenderedInput

CHECKPOINT_FORMAT = "autoseq-tiny/1"


class _Seq2Seq(nn.Module):
    def __init__(self, vocab_size: int, d_model: int, d_ff: int, max_pos: int):
        super().__init__()
        self.emb = nn.Embedding(vocab_size, d_model)
        self.pos = nn.Embedding(max_pos, d_model)
        self.enc_attn = nn.MultiheadAttention(d_model, 1, batch_first=True)
        self.enc_norm1 = nn.LayerNorm(d_model)
        self.enc_ff = nn.Sequential(
            nn.Linear(d_model, d_ff), nn.GELU(), nn.Linear(d_ff, d_model)
        )
        self.enc_norm2 = nn.LayerNorm(d_model)
        self.dec_attn = nn.MultiheadAttention(d_model, 1, batch_first=True)
        self.dec_norm1 = nn.LayerNorm(d_model)
        self.cross_attn = nn.MultiheadAttention(d_model, 1, batch_first=True)
        self.dec_norm2 = nn.LayerNorm(d_model)
        self.dec_ff = nn.Sequential(
            nn.Linear(d_model, d_ff), nn.GELU(), nn.Linear(d_ff, d_model)
        )
        self.dec_norm3 = nn.LayerNorm(d_model)
        self.out = nn.Linear(d_model, vocab_size)

    def _embed(self, ids: torch.Tensor) -> torch.Tensor:
        positions = torch.arange(ids.shape[1], device=ids.device)
        return self.emb(ids) + self.pos(positions)[None, :, :]

    def forward(
        self,
        enc_ids: torch.Tensor,
        dec_ids: torch.Tensor,
        enc_pad_mask: torch.Tensor | None = None,
    ) -> torch.Tensor:
        h = self._embed(enc_ids)
        a, _ = self.enc_attn(h, h, h, key_padding_mask=enc_pad_mask, need_weights=False)
        h = self.enc_norm1(h + a)
        h = self.enc_norm2(h + self.enc_ff(h))

        d = self._embed(dec_ids)
        n = dec_ids.shape[1]
        causal = torch.triu(
            torch.ones(n, n, dtype=torch.bool, device=dec_ids.device), diagonal=1
        )
        a, _ = self.dec_attn(d, d, d, attn_mask=causal, need_weights=False)
        d = self.dec_norm1(d + a)
        a, _ = self.cross_attn(d, h, h, key_padding_mask=enc_pad_mask, need_weights=False)
        d = self.dec_norm2(d + a)
        d = self.dec_norm3(d + self.dec_ff(d))
        return self.out(d)


class TinyNeuralModel(ConditionalSequenceModel):
    backend = "tiny-neural"
    trainable = True

    def __init__(
        self,
        vocab: Vocab,
        d_model: int = 32,
        d_ff: int = 64,
        max_pos: int = 64,
        seed: int = 0,
        identifier: str = "tiny-neural",
    ):
        if d_model > 64:
            raise DataError("tiny-neural model width is capped at 64")
        self.vocab = vocab
        self.d_model = d_model
        self.d_ff = d_ff
        self.max_pos = max_pos
        self.seed = seed
        self.identifier = identifier
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            self.net = _Seq2Seq(vocab.size, d_model, d_ff, max_pos).double()
        self.net.eval()

    # -- scoring ---------------------------------------------------------

    def _encode_input(self, rendered: RenderedInput) -> torch.Tensor:
        ids = self.vocab.encode_rendered(rendered)
        if len(ids) > self.max_pos:
            raise DataError(f"input longer than {self.max_pos} tokens")
        return torch.tensor([ids], dtype=torch.long)

    def _decoder_input(self, prefix: Sequence[int]) -> torch.Tensor:
        for tok in prefix:
            if not 0 <= tok < self.vocab.size:
                raise DataError(f"token id {tok} out of range")
        return torch.tensor([(self.vocab.pad_id, *prefix)], dtype=torch.long)

    def next_token_logprobs(
        self, rendered: RenderedInput, prefix: Sequence[int]
    ) -> np.ndarray:
        with torch.no_grad():
            logits = self.net(self._encode_input(rendered), self._decoder_input(prefix))
            return logits[0, -1].log_softmax(-1).numpy()

    def batch_next_token_logprobs(
        self, rendered: RenderedInput, prefixes: Sequence[Sequence[int]]
    ) -> list[np.ndarray]:
        if not prefixes:
            return []
        lengths = {len(p) for p in prefixes}
        if len(lengths) != 1:
            return super().batch_next_token_logprobs(rendered, prefixes)
        enc = self._encode_input(rendered).expand(len(prefixes), -1)
        dec = torch.tensor(
            [(self.vocab.pad_id, *p) for p in prefixes], dtype=torch.long
        )
        with torch.no_grad():
            logits = self.net(enc, dec)
            vecs = logits[:, -1].log_softmax(-1).numpy()
        return [vecs[i] for i in range(len(prefixes))]

    # -- training --------------------------------------------------------

    def _batch_loss(
        self, net: _Seq2Seq, batch: Sequence[tuple[RenderedInput, TokenSeq]]
    ) -> torch.Tensor:
        """Mean cross-entropy over the target tokens plus a closing EOS."""
        pad, eos = self.vocab.pad_id, self.vocab.eos_id
        enc_seqs = [self.vocab.encode_rendered(r) for r, _ in batch]
        tgt_seqs = [(*t, eos) for _, t in batch]
        enc_len = max(len(s) for s in enc_seqs)
        tgt_len = max(len(s) for s in tgt_seqs)
        enc = torch.full((len(batch), enc_len), pad, dtype=torch.long)
        dec = torch.full((len(batch), tgt_len), pad, dtype=torch.long)
        gold = torch.full((len(batch), tgt_len), -100, dtype=torch.long)
        for i, (src, tgt) in enumerate(zip(enc_seqs, tgt_seqs)):
            enc[i, : len(src)] = torch.tensor(src)
            dec[i, 1 : len(tgt)] = torch.tensor(tgt[:-1])
            gold[i, : len(tgt)] = torch.tensor(tgt)
        # encode_rendered never emits pad, so pad positions are exactly the tail fill
        pad_mask = enc == pad
        logits = net(enc, dec, enc_pad_mask=pad_mask)
        return nn.functional.cross_entropy(
            logits.reshape(-1, self.vocab.size), gold.reshape(-1), ignore_index=-100
        )

    def training_loss(self, pairs: Sequence[tuple[RenderedInput, TokenSeq]]) -> float:
        with torch.no_grad():
            return float(self._batch_loss(self.net, pairs))

    def fine_tune(
        self,
        pairs: Sequence[tuple[RenderedInput, TokenSeq]],
        config: FineTuneConfig,
        dev_eval: Callable[[ConditionalSequenceModel], float] | None = None,
    ) -> "TinyNeuralModel":
        if not pairs:
            raise DataError("fine_tune needs at least one training pair")
        for _, target in pairs:
            if len(target) == 0:
                raise DataError("label sequence must be non-empty")
        result = self.clone()
        if config.steps == 0:
            return result
        net = result.net
        net.train()
        opt = torch.optim.SGD(net.parameters(), lr=config.learning_rate)
        rng = np.random.default_rng(config.seed)
        order: list[int] = []
        best_metric = -np.inf
        best_state = None
        eval_steps = set(range(config.validate_every, config.steps + 1, config.validate_every))
        eval_steps.add(config.steps)
        for step in range(1, config.steps + 1):
            while len(order) < config.batch_size:
                order.extend(rng.permutation(len(pairs)).tolist())
            batch = [pairs[i] for i in order[: config.batch_size]]
            del order[: config.batch_size]
            opt.zero_grad()
            loss = self._batch_loss(net, batch)
            loss.backward()
            opt.step()
            if dev_eval is not None and step in eval_steps:
                net.eval()
                metric = float(dev_eval(result))
                net.train()
                if metric > best_metric:
                    best_metric = metric
                    best_state = copy.deepcopy(net.state_dict())
        net.eval()
        if best_state is not None:
            net.load_state_dict(best_state)
        return result

    # -- lifecycle -------------------------------------------------------

    def clone(self) -> "TinyNeuralModel":
        other = TinyNeuralModel(
            self.vocab, self.d_model, self.d_ff, self.max_pos, self.seed, self.identifier
        )
        other.net.load_state_dict(copy.deepcopy(self.net.state_dict()))
        return other

    def save(self, path: str | Path) -> None:
        """Checkpoint layout: format tag, vocab, shape hyperparameters, and
        the parameter state dict, in one torch-serialized file."""
        torch.save(
            {
                "format": CHECKPOINT_FORMAT,
                "vocab": list(self.vocab.tokens),
                "specials": {
                    "pad": self.vocab.pad_id,
                    "eos": self.vocab.eos_id,
                    "mask": self.vocab.mask_id,
                },
                "d_model": self.d_model,
                "d_ff": self.d_ff,
                "max_pos": self.max_pos,
                "seed": self.seed,
                "state": self.net.state_dict(),
            },
            str(path),
        )

    @classmethod
    def load(cls, path: str | Path) -> "TinyNeuralModel":
        blob = torch.load(str(path), weights_only=False)
        if blob.get("format") != CHECKPOINT_FORMAT:
            raise BackendError(f"{path}: not an {CHECKPOINT_FORMAT} checkpoint")
        vocab = Vocab(
            tuple(blob["vocab"]),
            pad_id=blob["specials"]["pad"],
            eos_id=blob["specials"]["eos"],
            mask_id=blob["specials"]["mask"],
        )
        model = cls(
            vocab,
            d_model=blob["d_model"],
            d_ff=blob["d_ff"],
            max_pos=blob["max_pos"],
            seed=blob["seed"],
            identifier=str(path),
        )
        model.net.load_state_dict(blob["state"])
        return model
