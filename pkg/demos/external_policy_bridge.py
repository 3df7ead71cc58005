"""
Driving the robots from another process
=======================================

"""

# the server runs the world; the client only sees observations and masks
import socket
import threading

from dyncoal import preset
from dyncoal.bridge import BridgeServer, Transport, decode_array, run_client

a, b = socket.socketpair()
server_side, client_side = Transport.from_socket(a), Transport.from_socket(b)


# a client rule: the legal cell holding the highest task level
def choose(planes):
    mask = planes[-1].ravel() > 0
    levels = planes[1:4].argmax(axis=0).ravel() + planes[1:4].max(axis=0).ravel()
    return int((levels * mask - ~mask).argmax())


client = threading.Thread(target=lambda: print("client got", run_client(client_side, choose)))
client.start()

# two episodes over the line protocol, then close the stream
server = BridgeServer(server_side, preset("nonhomogeneous", horizon=50))
status = server.serve([(0, 0), (0, 1)])
server_side.close()
client.join()
print("exit status", status, "rewards", [r.reward for r in server.results])
