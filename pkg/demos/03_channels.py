"""Channels: FIFO pairing locally, and by symbolic name across localities.

Run: python demos/03_channels.py
"""

from amt_runtime import Runtime
from amt_runtime.bench import install_bench_actions
from amt_runtime.cluster import launch_in_process, shutdown_all


def main():
    rt = Runtime().boot()

    # FIFO pairing: receives match sends in order, whichever came first.
    ch = rt.make_channel()
    early = ch.recv()  # a receive before any send parks a future
    ch.send("first")
    ch.send("second")
    print("early recv got:", early.get(), flush=True)
    print("next recv got:", ch.recv().get(), flush=True)

    # Producer/consumer rendezvous between tasks.
    pipe = rt.make_channel()

    def producer():
        for i in range(5):
            pipe.send(i * i)

    def consumer():
        return [pipe.recv().get() for _ in range(5)]

    rt.spawn(producer)
    print("squares through a channel:", rt.spawn(consumer).get(), flush=True)
    rt.shutdown()

    # A channel registered under a name is reachable from any locality.
    print("\ntwo localities, one named channel:", flush=True)
    rts = launch_in_process(2, workers=2, install=[install_bench_actions])
    try:
        rt0, rt1 = rts
        inbox = rt0.register_channel("/demo/inbox")
        rt1.channel_send("/demo/inbox", b"shipped across the wire").get()
        print("locality 0 received:", inbox.recv().get(), flush=True)
    finally:
        shutdown_all(rts)


if __name__ == "__main__":
    main()
