import { createApp } from "./app.js";
const root = document.getElementById("app");
if (!root)
    throw new Error("page shell is missing the #app container");
createApp(root);
