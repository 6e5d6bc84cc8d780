// Node TCP transport for the NDJSON wire protocol.

import * as net from "node:net";
import { ConsoleClient, Transport, lineFeeder } from "./client.js";

export function connectTcp(
  client: ConsoleClient,
  host: string,
  port: number,
): Promise<Transport> {
  return new Promise((resolve, reject) => {
    const sock = net.createConnection({ host, port });
    const transport: Transport = {
      send: (line) => sock.write(line),
      close: () => sock.end(),
    };
    const feed = lineFeeder(client);
    sock.setEncoding("utf8");
    sock.on("data", (chunk: string) => feed(chunk));
    sock.on("close", () => client.detach());
    sock.once("error", reject);
    sock.once("connect", () => {
      sock.removeListener("error", reject);
      sock.on("error", () => client.detach());
      client.attach(transport);
      resolve(transport);
    });
  });
}
